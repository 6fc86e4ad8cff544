#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prp/config.hpp"

namespace prp::app {

/// Flags shared by every subcommand.
struct Options {
  std::string config_path;
  std::string ckpt_path;
  std::string out_dir;
  std::string profile;
  std::optional<uint64_t> seed;
  std::string video_path;
  bool force = false;
};

/// Config file (or profile defaults) with --profile / --seed / --out applied, resolved and validated.
RunConfig resolve_options(const Options& opts);

int cmd_pretrain(const Options& opts);
int cmd_finetune(const Options& opts);
int cmd_eval(const Options& opts);
int cmd_retrieve(const Options& opts);
int cmd_visualize_attention(const Options& opts);
int cmd_gen_synthetic(const Options& opts);

/// Parses argv and dispatches. Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace prp::app
