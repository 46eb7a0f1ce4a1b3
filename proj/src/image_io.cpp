/*
 * Copyright 2026 The framesft Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "sft/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace sft {

namespace {

using FilePtr = std::unique_ptr<std::FILE, int (*)(std::FILE*)>;

FilePtr open_file(const std::filesystem::path& path, const char* mode)
{
    FilePtr f(std::fopen(path.string().c_str(), mode), &std::fclose);
    if (!f)
        throw ImageIoError(std::string("cannot open ") + path.string());
    return f;
}

struct Decoded
{
    std::size_t width = 0, height = 0, channels = 0;
    int bit_depth = 8;
    std::vector<std::uint16_t> samples;
};

Decoded decode(const std::filesystem::path& path)
{
    FilePtr file = open_file(path, "rb");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw ImageIoError("not a PNG file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError("libpng initialisation failed");
    }
    Decoded out;
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError("corrupt PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_strip_alpha(png);
    if (depth == 16)
        png_set_swap(png); // native little-endian uint16 rows
    png_read_update_info(png, info);

    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    out.channels = png_get_channels(png, info);
    depth = png_get_bit_depth(png, info);
    out.bit_depth = depth;
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    buffer.resize(row_bytes * out.height);
    rows.resize(out.height);
    for (std::size_t y = 0; y < out.height; ++y)
        rows[y] = buffer.data() + y * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t n = out.width * out.height * out.channels;
    out.samples.resize(n);
    if (depth == 16) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint16_t v;
            std::memcpy(&v, buffer.data() + 2 * i, 2);
            out.samples[i] = v;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i)
            out.samples[i] = buffer[i];
    }
    return out;
}

void encode(const std::filesystem::path& path, std::size_t width, std::size_t height, std::size_t channels,
            int bit_depth, const std::vector<std::uint16_t>& samples)
{
    FilePtr file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw ImageIoError("libpng initialisation failed");
    }
    const std::size_t bytes = bit_depth == 16 ? 2 : 1;
    std::vector<unsigned char> buffer(width * height * channels * bytes);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (bytes == 2) {
            buffer[2 * i] = static_cast<unsigned char>(samples[i] >> 8); // PNG is big-endian
            buffer[2 * i + 1] = static_cast<unsigned char>(samples[i] & 0xff);
        } else {
            buffer[i] = static_cast<unsigned char>(samples[i]);
        }
    }
    std::vector<png_bytep> rows(height);
    for (std::size_t y = 0; y < height; ++y)
        rows[y] = buffer.data() + y * width * channels * bytes;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ImageIoError("failed to encode PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace

Tensor read_png(const std::filesystem::path& path)
{
    const Decoded d = decode(path);
    const double maxv = d.bit_depth == 16 ? 65535.0 : 255.0;
    Tensor out({d.height, d.width, d.channels});
    for (std::size_t i = 0; i < d.samples.size(); ++i)
        out[i] = d.samples[i] / maxv;
    return out;
}

Tensor read_png_raw(const std::filesystem::path& path)
{
    const Decoded d = decode(path);
    if (d.channels != 1)
        throw ImageIoError("expected a single-channel PNG: " + path.string());
    Tensor out({d.height, d.width, 1});
    for (std::size_t i = 0; i < d.samples.size(); ++i)
        out[i] = d.samples[i];
    return out;
}

void write_png(const std::filesystem::path& path, const Tensor& image, int bit_depth)
{
    if (image.rank() != 3 || (image.dim(2) != 1 && image.dim(2) != 3))
        throw ImageIoError("write_png expects {H,W,1} or {H,W,3}, got " + shape_string(image.shape()));
    if (bit_depth != 8 && bit_depth != 16)
        throw ImageIoError("unsupported PNG bit depth");
    const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
    std::vector<std::uint16_t> samples(image.size());
    for (std::size_t i = 0; i < image.size(); ++i)
        samples[i] = static_cast<std::uint16_t>(std::lround(std::clamp(image[i], 0.0, 1.0) * maxv));
    encode(path, image.dim(1), image.dim(0), image.dim(2), bit_depth, samples);
}

void write_png_raw16(const std::filesystem::path& path, const Tensor& values)
{
    if (values.rank() != 3 || values.dim(2) != 1)
        throw ImageIoError("write_png_raw16 expects {H,W,1}");
    std::vector<std::uint16_t> samples(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        samples[i] = static_cast<std::uint16_t>(std::lround(std::clamp(values[i], 0.0, 65535.0)));
    encode(path, values.dim(1), values.dim(0), 1, 16, samples);
}

void write_float_map(const std::filesystem::path& path, const Tensor& values)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ImageIoError("cannot write " + path.string());
    for (double v : values.values()) {
        const float f = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
}

Tensor read_float_map(const std::filesystem::path& path, std::size_t height, std::size_t width)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ImageIoError("cannot open " + path.string());
    Tensor out({height, width, 1});
    for (std::size_t i = 0; i < out.size(); ++i) {
        float f;
        if (!in.read(reinterpret_cast<char*>(&f), sizeof f))
            throw ImageIoError("float map " + path.string() + " is shorter than " + std::to_string(height) + "x" +
                               std::to_string(width));
        out[i] = f;
    }
    return out;
}

Tensor quantize_8bit(const Tensor& image)
{
    Tensor out = image;
    for (double& v : out.storage())
        v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
    return out;
}

} // namespace sft
