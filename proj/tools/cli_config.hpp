#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "visita/data_io.hpp"
#include "visita/encoders.hpp"
#include "visita/kernels.hpp"
#include "visita/mkl_solver.hpp"
#include "visita/training.hpp"

namespace visita::cli {

/// Flat `key = value` settings. Later sources override earlier ones:
/// defaults, then the config file, then command-line flags.
struct CliConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  std::uint64_t seed = 42;
  std::size_t d_embed = 64;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t blocks = 2;
  std::size_t patch_size = 4;
  std::size_t image_size = 32;
  std::size_t caption_len = 16;
  std::size_t vocab_cap = 1024;
  double C = 1.0;
  double mkl_tol = 1e-4;
  std::size_t mkl_max_outer = 50;
  std::string kernels = "linear,rbf:0.5,poly:2:1";
  bool mkl_head = false;
  std::string split = "0.70,0.15,0.15";

  static const std::vector<std::string>& keys();

  /// ConfigError on an unknown key or a value that does not parse.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  /// Checks every module precondition that does not depend on data.
  void validate() const;

  ModelConfig model_config(std::size_t vocab_size) const;
  TrainConfig train_config() const;
  DataOptions data_options() const;
  std::vector<KernelSpec> kernel_bank() const;
  MklOptions mkl_options() const;
};

/// Applies every `key = value` line; blank lines and `#` comments are
/// skipped. Errors name the line number.
void apply_config_text(CliConfig& cfg, std::string_view text, std::string_view what = "config");

}  // namespace visita::cli
