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

#include "dovkit/data/io.hpp"

#include "dovkit/errors.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace dovkit {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kDatasetMagic = "EDOVDS01";

fs::path names_sidecar(const fs::path& path) {
  fs::path p = path;
  p += ".names";
  return p;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

namespace binio {

static_assert(std::endian::native == std::endian::little,
              "binary artifact helpers assume a little-endian host");

void write_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }
void write_u16(std::ostream& out, std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); }
void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void write_f32(std::ostream& out, float v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_f32s(std::ostream& out, std::span<const float> v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
}
void write_string(std::ostream& out, std::string_view s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

namespace {
void read_exact(std::istream& in, void* dst, std::size_t n) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError("unexpected end of file");
}
}  // namespace

std::uint8_t read_u8(std::istream& in) {
  std::uint8_t v;
  read_exact(in, &v, 1);
  return v;
}
std::uint16_t read_u16(std::istream& in) {
  std::uint16_t v;
  read_exact(in, &v, 2);
  return v;
}
std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v;
  read_exact(in, &v, 4);
  return v;
}
std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v;
  read_exact(in, &v, 8);
  return v;
}
float read_f32(std::istream& in) {
  float v;
  read_exact(in, &v, 4);
  return v;
}
void read_f32s(std::istream& in, std::span<float> out) { read_exact(in, out.data(), out.size() * 4); }
std::string read_string(std::istream& in) {
  const auto n = read_u32(in);
  if (n > (1u << 28)) throw FormatError("string length out of range");
  std::string s(n, '\0');
  read_exact(in, s.data(), n);
  return s;
}

void expect_magic(std::istream& in, std::string_view magic, std::string_view what) {
  std::array<char, 16> buf{};
  in.read(buf.data(), static_cast<std::streamsize>(magic.size()));
  if (static_cast<std::size_t>(in.gcount()) != magic.size() ||
      std::string_view(buf.data(), magic.size()) != magic) {
    throw FormatError(std::string(what) + ": bad magic (expected " + std::string(magic) + ")");
  }
}

}  // namespace binio

DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "folder-per-class" || name == "folder") return DatasetFormat::kFolderPerClass;
  if (name == "packed-binary" || name == "packed") return DatasetFormat::kPackedBinary;
  throw ValidationError("unknown dataset format '" + std::string(name) + "'");
}

std::string_view to_string(DatasetFormat format) {
  return format == DatasetFormat::kFolderPerClass ? "folder-per-class" : "packed-binary";
}

Image read_png(const fs::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng init failed");
  }
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG: " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * static_cast<std::size_t>(height));
  rows.resize(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + stride * static_cast<std::size_t>(y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  ImageShape shape{channels, height, width};
  Eigen::VectorXf pixels(shape.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        pixels[(c * height + y) * width + x] =
            dequantize_u8(buffer[stride * static_cast<std::size_t>(y) + static_cast<std::size_t>(x * channels + c)]);
      }
    }
  }
  return Image(shape, std::move(pixels), bit_depth <= 8);
}

void write_png(const Image& image, const fs::path& path) {
  const auto& s = image.shape;
  if (s.channels != 1 && s.channels != 3) throw PreconditionError("PNG export needs 1 or 3 channels");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error("cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng init failed");
  }
  std::vector<std::uint8_t> buffer(static_cast<std::size_t>(s.size()));
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      for (int c = 0; c < s.channels; ++c) {
        buffer[static_cast<std::size_t>((y * s.width + x) * s.channels + c)] = quantize_u8(image.at(c, y, x));
      }
    }
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(s.height));
  for (int y = 0; y < s.height; ++y) {
    rows[static_cast<std::size_t>(y)] = buffer.data() + static_cast<std::size_t>(y * s.width * s.channels);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG write failed: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(s.width), static_cast<png_uint_32>(s.height), 8,
               s.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

LabeledDataset load_folder(const fs::path& root) {
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw PreconditionError("no class directories under " + root.string());

  LabeledDataset ds;
  std::vector<Eigen::VectorXf> columns;
  bool have_shape = false;
  for (std::size_t k = 0; k < class_dirs.size(); ++k) {
    ds.class_names.push_back(class_dirs[k].filename().string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[k])) {
      if (!entry.is_regular_file()) continue;
      auto ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (ext == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Image img = read_png(f);
      if (!have_shape) {
        ds.shape = img.shape;
        have_shape = true;
      } else if (!(img.shape == ds.shape)) {
        throw ShapeMismatchError("image " + f.string() + " has a different shape from the first image");
      }
      ds.source_8bit = ds.source_8bit && img.source_8bit;
      columns.push_back(std::move(img.pixels));
      ds.labels.push_back(static_cast<int>(k));
      ds.ids.push_back(static_cast<std::uint64_t>(ds.ids.size()));
      ds.sources.push_back(fs::relative(f, root).generic_string());
    }
  }
  ds.images.resize(have_shape ? ds.shape.size() : 0, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t i = 0; i < columns.size(); ++i) ds.images.col(static_cast<Eigen::Index>(i)) = columns[i];
  return ds;
}

LabeledDataset load_packed(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  binio::expect_magic(in, kDatasetMagic, "packed dataset");
  const auto n = binio::read_u32(in);
  const auto k = binio::read_u32(in);
  LabeledDataset ds;
  ds.shape.channels = static_cast<int>(binio::read_u32(in));
  ds.shape.height = static_cast<int>(binio::read_u32(in));
  ds.shape.width = static_cast<int>(binio::read_u32(in));
  if (k == 0) throw PreconditionError("packed dataset declares zero classes");
  if (ds.shape.size() <= 0 || ds.shape.size() > (1 << 24)) throw FormatError("packed dataset: bad image shape");
  const auto pixels = static_cast<std::size_t>(ds.shape.size());
  ds.images.resize(static_cast<Eigen::Index>(pixels), n);
  ds.labels.resize(n);
  ds.ids.resize(n);
  std::vector<std::uint8_t> raw(pixels);
  for (std::uint32_t i = 0; i < n; ++i) {
    ds.ids[i] = binio::read_u64(in);
    ds.labels[i] = binio::read_u16(in);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(pixels));
    if (static_cast<std::size_t>(in.gcount()) != pixels) throw FormatError("packed dataset truncated");
    float* col = ds.images.col(i).data();
    for (std::size_t p = 0; p < pixels; ++p) col[p] = dequantize_u8(raw[p]);
  }
  std::ifstream names(names_sidecar(path));
  if (names) {
    std::string line;
    while (std::getline(names, line)) {
      if (!line.empty()) ds.class_names.push_back(line);
    }
    if (ds.class_names.size() != k) throw FormatError("class-name sidecar does not match K");
  } else {
    ds.class_names = default_class_names(static_cast<int>(k));
  }
  return ds;
}

}  // namespace

LabeledDataset load_dataset(const fs::path& path, DatasetFormat format) {
  if (!fs::exists(path)) throw PreconditionError("dataset path does not exist: " + path.string());
  LabeledDataset ds = format == DatasetFormat::kFolderPerClass ? load_folder(path) : load_packed(path);
  ds.validate();
  return ds;
}

void save_packed_dataset(const LabeledDataset& dataset, const fs::path& path) {
  dataset.validate();
  atomic_write(path, [&](std::ostream& out) {
    out.write(kDatasetMagic.data(), static_cast<std::streamsize>(kDatasetMagic.size()));
    binio::write_u32(out, static_cast<std::uint32_t>(dataset.size()));
    binio::write_u32(out, static_cast<std::uint32_t>(dataset.num_classes()));
    binio::write_u32(out, static_cast<std::uint32_t>(dataset.shape.channels));
    binio::write_u32(out, static_cast<std::uint32_t>(dataset.shape.height));
    binio::write_u32(out, static_cast<std::uint32_t>(dataset.shape.width));
    std::vector<char> raw(static_cast<std::size_t>(dataset.shape.size()));
    for (int i = 0; i < dataset.size(); ++i) {
      binio::write_u64(out, dataset.ids[static_cast<std::size_t>(i)]);
      binio::write_u16(out, static_cast<std::uint16_t>(dataset.labels[static_cast<std::size_t>(i)]));
      const float* col = dataset.images.col(i).data();
      for (std::size_t p = 0; p < raw.size(); ++p) raw[p] = static_cast<char>(quantize_u8(col[p]));
      out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
    }
  });
  atomic_write(names_sidecar(path), [&](std::ostream& out) {
    for (const auto& name : dataset.class_names) out << name << '\n';
  });
}

void save_folder_dataset(const LabeledDataset& dataset, const fs::path& root) {
  dataset.validate();
  for (int i = 0; i < dataset.size(); ++i) {
    const auto& cls = dataset.class_names[static_cast<std::size_t>(dataset.labels[static_cast<std::size_t>(i)])];
    char name[32];
    std::snprintf(name, sizeof(name), "%08llu.png", static_cast<unsigned long long>(dataset.ids[static_cast<std::size_t>(i)]));
    write_png(dataset.image(i), root / cls / name);
  }
}

}  // namespace dovkit
