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
#pragma once

#include "sft/tensor.hpp"

#include <filesystem>
#include <stdexcept>

namespace sft {

class ImageIoError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Decodes an 8- or 16-bit PNG to {H, W, C} in [0,1]; C is 1 (gray) or 3
/// (RGB). Alpha is dropped and palettes are expanded.
Tensor read_png(const std::filesystem::path& path);

/// Raw sample values of a 16-bit (or 8-bit) single-channel PNG, {H, W, 1}.
Tensor read_png_raw(const std::filesystem::path& path);

/// Encodes values in [0,1] (clamped, rounded) at 8 or 16 bits. C must be 1
/// or 3.
void write_png(const std::filesystem::path& path, const Tensor& image, int bit_depth = 8);

/// Writes raw integer sample values (clamped to [0, 65535]) as 16-bit gray.
void write_png_raw16(const std::filesystem::path& path, const Tensor& values);

/// Little-endian float32 map without header; dimensions come from the caller.
void write_float_map(const std::filesystem::path& path, const Tensor& values);
Tensor read_float_map(const std::filesystem::path& path, std::size_t height, std::size_t width);

/// Rounds every value to the nearest multiple of 1/255 within [0,1].
Tensor quantize_8bit(const Tensor& image);

} // namespace sft
