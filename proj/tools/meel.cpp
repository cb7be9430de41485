#include <CLI11.hpp>
#include <iostream>

#include "meel/cli.hpp"

int main(int argc, char** argv) {
  using namespace meel::cli;
  CLI::App app{"Memory enhanced embedding learning for cross-modal video-text retrieval"};
  app.require_subcommand(1);

  std::string gen_config, gen_out;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset (features + manifest)");
  generate->add_option("--config,-c", gen_config, "JSON config; only the data section is used");
  generate->add_option("--out,-o", gen_out, "Output directory")->required();

  TrainOptions train_opts;
  std::string train_config, train_data, train_ckpt, train_log;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  auto* train = app.add_subcommand("train", "Train and write the best checkpoint");
  train->add_option("--config,-c", train_config, "JSON config");
  train->add_option("--data,-d", train_data, "Dataset manifest (default: data section of the config)");
  train->add_option("--out,-o", train_ckpt, "Checkpoint path")->required();
  train->add_option("--log", train_log, "JSONL training log (default: <out>.log.jsonl)");
  train->add_flag("--no-infonce", train_opts.no_infonce, "Drop both InfoNCE losses");
  train->add_flag("--no-center", train_opts.no_center, "Drop the center loss");
  train->add_flag("--no-momentum", train_opts.no_momentum,
                  "Copy query weights into the key encoders every step instead of the EMA");
  auto* seed_opt = train->add_option("--seed", seed, "Override train.seed");
  auto* epochs_opt = train->add_option("--epochs", epochs, "Override train.epochs");

  EvalOptions eval_opts;
  std::string eval_config, eval_encoder, eval_split;
  auto* eval = app.add_subcommand("eval", "Report retrieval metrics of a checkpoint");
  eval->add_option("--checkpoint,-k", eval_opts.checkpoint, "Checkpoint path")->required();
  eval->add_option("--data,-d", eval_opts.data, "Dataset manifest")->required();
  eval->add_option("--config,-c", eval_config, "JSON config; only the eval section matters");
  auto* encoder_opt = eval->add_option("--encoder", eval_encoder, "momentum (default) or query");
  auto* split_opt = eval->add_option("--split", eval_split, "train, val or test (default)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*generate) return cmd_generate(gen_config, gen_out, std::cout, std::cerr);
  if (*train) {
    train_opts.config = train_config;
    if (!train_data.empty()) train_opts.data = train_data;
    train_opts.checkpoint = train_ckpt;
    if (!train_log.empty()) train_opts.log = train_log;
    if (*seed_opt) train_opts.seed = seed;
    if (*epochs_opt) train_opts.epochs = epochs;
    return cmd_train(train_opts, std::cout, std::cerr);
  }
  if (!eval_config.empty()) eval_opts.config = eval_config;
  if (*encoder_opt) eval_opts.encoder = eval_encoder;
  if (*split_opt) eval_opts.split = eval_split;
  return cmd_eval(eval_opts, std::cout, std::cerr);
}
