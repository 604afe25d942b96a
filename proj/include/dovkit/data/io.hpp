// Copyright 2026 The dovkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "dovkit/data/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

namespace dovkit {

enum class DatasetFormat { kFolderPerClass, kPackedBinary };

DatasetFormat parse_dataset_format(std::string_view name);
std::string_view to_string(DatasetFormat format);

// Loads a dataset and converts pixels to the unit range.
//
// Folder layout: one directory per class (lexicographic order defines the
// class index) holding PNG files; ids follow the sorted traversal order.
// Packed layout: "EDOVDS01", u32 n, u32 K, u32 C, u32 H, u32 W, then per
// sample u64 id, u16 label, C*H*W bytes (CHW). Class names are read from an
// optional "<file>.names" sidecar (one per line).
LabeledDataset load_dataset(const std::filesystem::path& path, DatasetFormat format);

// Writes the packed layout (and the names sidecar). Pixels are quantized to
// 8 bits. The write is atomic (temp file + rename).
void save_packed_dataset(const LabeledDataset& dataset, const std::filesystem::path& path);

// Writes a folder-per-class tree of PNG files named by sample id.
void save_folder_dataset(const LabeledDataset& dataset, const std::filesystem::path& root);

Image read_png(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path);

// Little-endian primitive helpers shared by every binary artifact format.
namespace binio {

void write_u8(std::ostream& out, std::uint8_t v);
void write_u16(std::ostream& out, std::uint16_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_f32s(std::ostream& out, std::span<const float> v);
void write_string(std::ostream& out, std::string_view s);

std::uint8_t read_u8(std::istream& in);
std::uint16_t read_u16(std::istream& in);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
float read_f32(std::istream& in);
void read_f32s(std::istream& in, std::span<float> out);
std::string read_string(std::istream& in);

void expect_magic(std::istream& in, std::string_view magic, std::string_view what);

}  // namespace binio

// Writes to "<path>.tmp" through `writer` and renames over `path`.
template <typename Writer>
void atomic_write(const std::filesystem::path& path, Writer&& writer);

}  // namespace dovkit

#include "dovkit/data/io_inl.hpp"
