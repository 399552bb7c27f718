#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "gitloss/data.hpp"

namespace fixtures {

struct IdxPaths {
  std::string train_images, train_labels, val_images, val_labels;
};

// Blob data squashed into 4x4 "images" with pixels on the k/255 grid, so
// the IDX files reload exactly.
inline gitloss::Dataset synthetic_images(std::uint64_t seed, std::size_t n_classes,
                                         std::size_t per_class) {
  gitloss::SeededRng rng(seed);
  auto blobs = gitloss::make_blobs(rng, n_classes, per_class, 16, 0.8, 0.08);
  gitloss::Dataset ds = blobs.data;
  for (double& v : ds.images.values()) {
    const double clamped = std::min(1.0, std::max(0.0, v + 0.5));
    v = std::round(clamped * 255.0) / 255.0;
  }
  ds.image_rows = 4;
  ds.image_cols = 4;
  ds.n_classes = 10;
  return ds;
}

inline IdxPaths write_synthetic_idx(const std::filesystem::path& dir, std::uint64_t seed = 3) {
  std::filesystem::create_directories(dir);
  IdxPaths p{(dir / "train-images-idx3-ubyte").string(), (dir / "train-labels-idx1-ubyte").string(),
             (dir / "t10k-images-idx3-ubyte").string(), (dir / "t10k-labels-idx1-ubyte").string()};
  // One draw of the clusters; every fourth sample goes to the evaluation split.
  const gitloss::Dataset all = synthetic_images(seed, 3, 40);
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < all.size(); ++i) (i % 4 == 0 ? val_idx : train_idx).push_back(i);
  auto subset = [&](const std::vector<std::size_t>& idx) {
    const gitloss::Batch b = gitloss::gather(all, idx);
    gitloss::Dataset ds = all;
    ds.images = b.inputs;
    ds.labels = b.labels;
    return ds;
  };
  gitloss::write_idx(subset(train_idx), p.train_images, p.train_labels);
  gitloss::write_idx(subset(val_idx), p.val_images, p.val_labels);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Runs the CLI with stdout/stderr captured to files in `dir`; returns the exit code.
inline int run_cli(const std::string& args, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string cmd = std::string("NO_COLOR=1 \"") + GITLOSS_CLI_PATH + "\" " + args + " > \"" +
                          (dir / "stdout.txt").string() + "\" 2> \"" + (dir / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace fixtures
