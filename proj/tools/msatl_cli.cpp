#include "msatl/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"msatl: multi-source adversarial transfer learning for segmentation"};
  app.require_subcommand(1);

  msatl::cli::ForgeArgs forge;
  auto* cf = app.add_subcommand("forge", "forge a source domain by part-wise noise occlusion");
  cf->add_option("--input", forge.input, "dataset root (images/, masks/)")->required();
  cf->add_option("--parts", forge.parts, "part-mask root (<part>/<stem>.png)")->required();
  cf->add_option("--keep", forge.keep, "part to keep visible and labelled")->required();
  cf->add_option("--mean", forge.mean, "noise mean")->capture_default_str();
  cf->add_option("--variance", forge.variance, "noise variance")->capture_default_str();
  cf->add_option("--seed", forge.seed, "root seed")->capture_default_str();
  cf->add_option("--source-index", forge.source_index, "forged domain index")->capture_default_str();
  cf->add_option("--out", forge.out, "output dataset root")->required();

  msatl::cli::ToyArgs toy;
  auto* ct = app.add_subcommand("toy", "generate the synthetic toy corpus");
  ct->add_option("--out", toy.out, "output directory")->required();
  ct->add_option("--seed", toy.seed, "root seed")->capture_default_str();
  ct->add_option("--image-size", toy.cfg.image_size, "scene size")->capture_default_str();
  ct->add_option("--target-count", toy.cfg.target_count, "target samples")->capture_default_str();
  ct->add_option("--source-count", toy.cfg.source_count, "samples per source")->capture_default_str();
  ct->add_option("--parts", toy.cfg.num_parts, "number of parts / sources")->capture_default_str();

  msatl::cli::TrainArgs tr;
  std::string tr_ablation, tr_out;
  std::uint64_t tr_seed = 0;
  auto* cr = app.add_subcommand("train", "train per the config file");
  cr->add_option("--config", tr.config, "run config file")->required();
  auto* oa = cr->add_option("--ablation", tr_ablation, "none|no_attention|independent_target");
  auto* os_ = cr->add_option("--seed", tr_seed, "override the config seed");
  auto* oo = cr->add_option("--out", tr_out, "override the output directory");

  msatl::cli::EvalArgs ev;
  std::string ev_out;
  auto* ce = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  ce->add_option("--config", ev.config, "run config file")->required();
  ce->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
  auto* eo = ce->add_option("--out", ev_out, "metrics output file");

  msatl::cli::HeatmapArgs hm;
  auto* ch = app.add_subcommand("heatmap", "export per-sub-network attention heat maps");
  ch->add_option("--checkpoint", hm.checkpoint, "checkpoint file")->required();
  ch->add_option("--image", hm.image, "input image")->required();
  ch->add_option("--out", hm.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*cf) return msatl::cli::cmd_forge(forge);
    if (*ct) return msatl::cli::cmd_toy(toy);
    if (*cr) {
      if (*oa) tr.ablation = tr_ablation;
      if (*os_) tr.seed = tr_seed;
      if (*oo) tr.out_dir = tr_out;
      return msatl::cli::cmd_train(tr);
    }
    if (*ce) {
      if (*eo) ev.out = ev_out;
      return msatl::cli::cmd_eval(ev);
    }
    if (*ch) return msatl::cli::cmd_heatmap(hm);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
