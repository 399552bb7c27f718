#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include <zlib.h>

#include "gitloss/errors.hpp"
#include "gitloss/losses.hpp"
#include "gitloss/matrix.hpp"
#include "gitloss/rng.hpp"

namespace gitloss {

/// Images as rows scaled to [0, 1], one label per row.
struct Dataset {
  Matrix images;
  std::vector<Label> labels;
  std::size_t n_classes = 10;
  // Spatial shape of each image for IDX output; 0 when not an image set.
  std::size_t image_rows = 0;
  std::size_t image_cols = 0;

  std::size_t size() const noexcept { return labels.size(); }
};

inline constexpr std::uint32_t kIdxImagesMagic = 2051;  // 0x00000803
inline constexpr std::uint32_t kIdxLabelsMagic = 2049;  // 0x00000801

namespace detail {

inline bool has_gz_suffix(const std::string& path) {
  return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

// Whole-file read; gzip-decompressed when the name ends in ".gz".
inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::vector<unsigned char> bytes;
  if (has_gz_suffix(path)) {
    gzFile gz = gzopen(path.c_str(), "rb");
    if (!gz) throw IoError("cannot open " + path);
    unsigned char buf[1 << 16];
    int n;
    while ((n = gzread(gz, buf, sizeof buf)) > 0) bytes.insert(bytes.end(), buf, buf + n);
    int errnum = 0;
    const char* msg = gzerror(gz, &errnum);
    const bool failed = n < 0 || (errnum != Z_OK && errnum != Z_STREAM_END);
    const std::string reason = msg ? msg : "";
    gzclose(gz);
    if (failed) throw IoError("corrupt gzip stream in " + path + ": " + reason);
    return bytes;
  }
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open " + path);
  unsigned char buf[1 << 16];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) bytes.insert(bytes.end(), buf, buf + n);
  const bool failed = std::ferror(f) != 0;
  std::fclose(f);
  if (failed) throw IoError("read error on " + path);
  return bytes;
}

inline void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  if (has_gz_suffix(path)) {
    gzFile gz = gzopen(path.c_str(), "wb9");
    if (!gz) throw IoError("cannot open " + path + " for writing");
    const int written = bytes.empty() ? 0
                                      : gzwrite(gz, bytes.data(), static_cast<unsigned>(bytes.size()));
    const int closed = gzclose(gz);
    if (written != static_cast<int>(bytes.size()) || closed != Z_OK) {
      throw IoError("failed writing " + path);
    }
    return;
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open " + path + " for writing");
  const std::size_t written = std::fwrite(bytes.data(), 1, bytes.size(), f);
  const int closed = std::fclose(f);
  if (written != bytes.size() || closed != 0) throw IoError("failed writing " + path);
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t offset,
                               const std::string& path) {
  if (offset + 4 > b.size()) throw IoError("truncated IDX header in " + path);
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

inline void append_be32(std::vector<unsigned char>& b, std::uint32_t v) {
  b.push_back(static_cast<unsigned char>(v >> 24));
  b.push_back(static_cast<unsigned char>(v >> 16));
  b.push_back(static_cast<unsigned char>(v >> 8));
  b.push_back(static_cast<unsigned char>(v));
}

inline void expect_magic(std::uint32_t actual, std::uint32_t expected, const std::string& path) {
  if (actual != expected) {
    throw FormatError("bad IDX magic in " + path + ": expected " + std::to_string(expected) +
                      ", got " + std::to_string(actual));
  }
}

}  // namespace detail

/// Parses an MNIST-style IDX image/label file pair (big-endian headers,
/// unsigned-byte payload). Pixels are divided by 255.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = detail::read_file_bytes(images_path);
  detail::expect_magic(detail::read_be32(img, 0, images_path), kIdxImagesMagic, images_path);
  const std::size_t n_images = detail::read_be32(img, 4, images_path);
  const std::size_t rows = detail::read_be32(img, 8, images_path);
  const std::size_t cols = detail::read_be32(img, 12, images_path);
  if (n_images == 0 || rows == 0 || cols == 0) {
    throw FormatError("empty IDX image dimensions in " + images_path);
  }
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + n_images * pixels) {
    throw IoError("truncated IDX image payload in " + images_path + ": expected " +
                  std::to_string(16 + n_images * pixels) + " bytes, got " +
                  std::to_string(img.size()));
  }

  const auto lab = detail::read_file_bytes(labels_path);
  detail::expect_magic(detail::read_be32(lab, 0, labels_path), kIdxLabelsMagic, labels_path);
  const std::size_t n_labels = detail::read_be32(lab, 4, labels_path);
  if (lab.size() < 8 + n_labels) {
    throw IoError("truncated IDX label payload in " + labels_path + ": expected " +
                  std::to_string(8 + n_labels) + " bytes, got " + std::to_string(lab.size()));
  }
  if (n_labels != n_images) {
    throw ConsistencyError(images_path + " holds " + std::to_string(n_images) + " images but " +
                           labels_path + " holds " + std::to_string(n_labels) + " labels");
  }

  Dataset ds;
  ds.image_rows = rows;
  ds.image_cols = cols;
  ds.images = Matrix(n_images, pixels);
  auto dst = ds.images.values();
  for (std::size_t k = 0; k < n_images * pixels; ++k) dst[k] = img[16 + k] / 255.0;
  ds.labels.resize(n_labels);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n_labels; ++i) {
    ds.labels[i] = lab[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.n_classes = std::max<std::size_t>(10, max_label + 1);
  return ds;
}

/// Inverse of load_idx. Pixels are mapped back with round(v * 255), which
/// is exact for anything load_idx produced.
inline void write_idx(const Dataset& ds, const std::string& images_path,
                      const std::string& labels_path) {
  if (ds.image_rows * ds.image_cols != ds.images.cols()) {
    throw ParameterError("write_idx: dataset has no image geometry matching its row width");
  }
  std::vector<unsigned char> img;
  img.reserve(16 + ds.images.size());
  detail::append_be32(img, kIdxImagesMagic);
  detail::append_be32(img, static_cast<std::uint32_t>(ds.size()));
  detail::append_be32(img, static_cast<std::uint32_t>(ds.image_rows));
  detail::append_be32(img, static_cast<std::uint32_t>(ds.image_cols));
  for (double v : ds.images.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("write_idx: pixel outside [0, 1]");
    img.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  std::vector<unsigned char> lab;
  lab.reserve(8 + ds.size());
  detail::append_be32(lab, kIdxLabelsMagic);
  detail::append_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (Label y : ds.labels) {
    if (y > 255) throw ParameterError("write_idx: label does not fit in a byte");
    lab.push_back(static_cast<unsigned char>(y));
  }
  detail::write_file_bytes(images_path, img);
  detail::write_file_bytes(labels_path, lab);
}

/// First `n` rows (all of them when n == 0 or n >= size).
inline Dataset take(const Dataset& ds, std::size_t n) {
  if (n == 0 || n >= ds.size()) return ds;
  Dataset out;
  out.n_classes = ds.n_classes;
  out.image_rows = ds.image_rows;
  out.image_cols = ds.image_cols;
  const auto first = ds.images.values().subspan(0, n * ds.images.cols());
  out.images = Matrix(n, ds.images.cols(), std::vector<double>(first.begin(), first.end()));
  out.labels.assign(ds.labels.begin(), ds.labels.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

struct Blobs {
  Dataset data;
  Matrix centers;  // n_classes x dim ground truth
};

/// Isotropic gaussian clusters. Centers are uniform in the cube
/// [-spread/2, spread/2]^dim; samples are grouped by class.
inline Blobs make_blobs(SeededRng& rng, std::size_t n_classes, std::size_t per_class,
                        std::size_t dim, double center_spread, double noise_std) {
  if (n_classes == 0 || per_class == 0 || dim == 0) {
    throw ParameterError("make_blobs: counts must be >= 1");
  }
  if (!(noise_std >= 0.0)) throw ParameterError("make_blobs: noise_std must be >= 0");
  Blobs out;
  out.centers = Matrix(n_classes, dim);
  for (double& v : out.centers.values()) v = rng.uniform(-0.5 * center_spread, 0.5 * center_spread);
  out.data.n_classes = n_classes;
  out.data.images = Matrix(n_classes * per_class, dim);
  out.data.labels.resize(n_classes * per_class);
  for (std::size_t k = 0; k < n_classes; ++k) {
    auto c = out.centers.row(k);
    for (std::size_t s = 0; s < per_class; ++s) {
      const std::size_t i = k * per_class + s;
      out.data.labels[i] = k;
      auto x = out.data.images.row(i);
      for (std::size_t t = 0; t < dim; ++t) x[t] = rng.gaussian(c[t], noise_std);
    }
  }
  return out;
}

struct BatchPlan {
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
};

/// Seeded permutation of [0, n) cut into consecutive batches; the last one
/// may be short. Depends only on (seed, epoch).
inline std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, const BatchPlan& plan) {
  if (plan.batch_size == 0) throw ParameterError("batch size must be >= 1");
  if (plan.batch_size > n) {
    throw ParameterError("batch size " + std::to_string(plan.batch_size) + " exceeds dataset size " +
                         std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SeededRng rng = SeededRng(plan.seed).split(plan.epoch);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += plan.batch_size) {
    const std::size_t stop = std::min(n, start + plan.batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return out;
}

struct Batch {
  Matrix inputs;
  std::vector<Label> labels;
};

inline Batch gather(const Dataset& ds, std::span<const std::size_t> indices) {
  Batch b;
  b.inputs = Matrix(indices.size(), ds.images.cols());
  b.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto src = ds.images.row(indices[r]);
    std::copy(src.begin(), src.end(), b.inputs.row(r).begin());
    b.labels.push_back(ds.labels[indices[r]]);
  }
  return b;
}

inline std::vector<Batch> batches(const Dataset& ds, const BatchPlan& plan) {
  std::vector<Batch> out;
  for (const auto& idx : batch_indices(ds.size(), plan)) out.push_back(gather(ds, idx));
  return out;
}

}  // namespace gitloss
