#include "msatl/cli.hpp"

#include "msatl/checkpoint.hpp"
#include "msatl/heatmap.hpp"
#include "msatl/image_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace msatl::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void config_error(const std::string& origin, int line,
                               const std::string& what) {
  throw std::invalid_argument(origin + ":" + std::to_string(line) + ": " + what);
}

double parse_real(const std::string& v, const std::string& origin, int line) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    config_error(origin, line, "not a number: \"" + v + "\"");
  }
}

long long parse_int(const std::string& v, const std::string& origin, int line) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    config_error(origin, line, "not an integer: \"" + v + "\"");
  }
}

}  // namespace

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  return parse(buf.str(), path.string());
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig rc;
  std::string section;
  std::stringstream ss(text);
  std::string raw;
  int line = 0;
  while (std::getline(ss, raw)) {
    ++line;
    std::string s = trim(raw);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[' && s.back() == ']') {
      section = trim(s.substr(1, s.size() - 2));
      if (section != "data" && section != "model" && section != "batcher" &&
          section != "train")
        config_error(origin, line, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) config_error(origin, line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    const std::string val = trim(s.substr(eq + 1));
    if (section.empty())
      config_error(origin, line, "key \"" + key + "\" outside any section");

    if (section == "data") {
      if (key == "target_dir") rc.target_dir = val;
      else if (key == "source_dirs") rc.source_dirs = split_list(val);
      else if (key == "train_ratio") rc.train_ratio = parse_real(val, origin, line);
      else if (key == "val_ratio") rc.val_ratio = parse_real(val, origin, line);
      else if (key == "test_ratio") rc.test_ratio = parse_real(val, origin, line);
      else config_error(origin, line, "unknown key \"" + key + "\" in [data]");
    } else if (section == "model") {
      if (key == "image_size") rc.image_size = static_cast<int>(parse_int(val, origin, line));
      else if (key == "depth") rc.depth = static_cast<int>(parse_int(val, origin, line));
      else if (key == "base_width") rc.base_width = static_cast<int>(parse_int(val, origin, line));
      else config_error(origin, line, "unknown key \"" + key + "\" in [model]");
    } else if (section == "batcher") {
      if (key == "sub_batch_size") rc.sub_batch_size = static_cast<int>(parse_int(val, origin, line));
      else config_error(origin, line, "unknown key \"" + key + "\" in [batcher]");
    } else {  // train
      if (key == "epochs") rc.epochs = static_cast<int>(parse_int(val, origin, line));
      else if (key == "learning_rate") rc.learning_rate = parse_real(val, origin, line);
      else if (key == "lambda") rc.lambda = parse_real(val, origin, line);
      else if (key == "seed") rc.seed = static_cast<std::uint64_t>(parse_int(val, origin, line));
      else if (key == "ablation") {
        try {
          rc.ablation = train::ablation_from_string(val);
        } catch (const std::exception& e) {
          config_error(origin, line, e.what());
        }
      } else if (key == "supervision") {
        if (val == "target_only") rc.supervision = nn::SupervisionMode::target_only;
        else if (val == "per_sample_replicate")
          rc.supervision = nn::SupervisionMode::per_sample_replicate;
        else config_error(origin, line, "unknown supervision \"" + val + "\"");
      } else if (key == "out_dir") rc.out_dir = val;
      else config_error(origin, line, "unknown key \"" + key + "\" in [train]");
    }
  }
  rc.validate();
  return rc;
}

void RunConfig::validate() const {
  if (target_dir.empty()) throw std::invalid_argument("config: target_dir is required");
  if (source_dirs.empty()) throw std::invalid_argument("config: source_dirs is required");
  model_config().validate();
  train_config().validate();
  BatcherConfig::from_sub_batch(sub_batch_size, static_cast<int>(source_dirs.size()),
                                seed, ablation == train::Ablation::independent_target)
      .validate();
  const double sum = train_ratio + val_ratio + test_ratio;
  if (train_ratio <= 0 || val_ratio <= 0 || test_ratio <= 0 ||
      std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("config: split ratios must be positive and sum to 1");
}

nn::ModelConfig RunConfig::model_config() const {
  nn::ModelConfig mc;
  mc.image_size = image_size;
  mc.depth = depth;
  mc.base_width = base_width;
  mc.num_sources = static_cast<int>(source_dirs.size());
  mc.lambda = lambda;
  mc.seed = seed;
  mc.use_attention = ablation != train::Ablation::no_attention;
  return mc;
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig tc;
  tc.epochs = epochs;
  tc.learning_rate = learning_rate;
  tc.seed = seed;
  tc.lambda = lambda;
  tc.sub_batch_size = sub_batch_size;
  tc.ablation = ablation;
  tc.supervision = supervision;
  tc.out_dir = out_dir;
  return tc;
}

LoadedData load_data(const RunConfig& rc) {
  LoadedData d;
  const DomainDataset target = load_dataset(rc.target_dir, DomainId::target());
  const DatasetSplit split = split_dataset(
      target, {rc.train_ratio, rc.val_ratio, rc.test_ratio}, derive_seed(rc.seed, "split"));
  d.target_train = split.train;
  d.target_val = split.val;
  d.target_test = split.test;
  for (std::size_t i = 0; i < rc.source_dirs.size(); ++i)
    d.sources.push_back(load_dataset(rc.source_dirs[i],
                                     DomainId::source(static_cast<int>(i) + 1)));
  return d;
}

namespace {

void write_metrics(const MetricReport& report, const fs::path& path) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << report.to_json() << '\n';
}

void print_summary(const MetricReport& r, std::ostream& os) {
  os << "images: " << r.per_image.size() << "\n"
     << "iou:       " << r.iou.mean << " +/- " << r.iou.std_dev << "\n"
     << "precision: " << r.precision.mean << " +/- " << r.precision.std_dev << "\n"
     << "recall:    " << r.recall.mean << " +/- " << r.recall.std_dev << "\n"
     << "f_beta:    " << r.f_beta.mean << " +/- " << r.f_beta.std_dev << "\n"
     << "dice:      " << r.dice.mean << " +/- " << r.dice.std_dev << "\n";
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path))
    throw std::invalid_argument(std::string(what) + " not found: " + path);
}

}  // namespace

int cmd_forge(const ForgeArgs& a) {
  require_file(a.input, "input directory");
  require_file(a.parts, "parts directory");
  const DomainDataset in = load_dataset(a.input, DomainId::target());
  DomainDataset out;
  out.domain_id = DomainId::source(a.source_index);
  for (std::size_t i = 0; i < in.samples.size(); ++i) {
    const DomainSample& s = in.samples[i];
    const PartAnnotation parts = load_parts(a.parts, s.sample_id);
    const NoiseSpec noise{a.mean, a.variance, derive_seed(a.seed, "forge", i)};
    out.samples.push_back(forge_source(s, parts, a.keep, noise, out.domain_id));
  }
  save_dataset(out, a.out);
  std::cout << "forged " << out.samples.size() << " samples (keep=" << a.keep
            << ") into " << a.out << "\n";
  return 0;
}

int cmd_toy(const ToyArgs& a) {
  const ToyCorpus corpus = generate_toy_corpus(a.cfg, a.seed);
  save_toy_corpus(corpus, a.out);

  // a ready-to-run config for the generated corpus
  std::ofstream os(fs::path(a.out) / "run.ini", std::ios::trunc);
  os << "[data]\n"
     << "target_dir = " << a.out << "/target\n"
     << "source_dirs = ";
  for (std::size_t i = 0; i < corpus.sources.size(); ++i)
    os << (i ? ", " : "") << a.out << "/source_" << i + 1;
  os << "\n\n[model]\nimage_size = " << a.cfg.image_size
     << "\ndepth = 4\nbase_width = 4\n\n[batcher]\nsub_batch_size = 2\n\n"
     << "[train]\nepochs = 50\nlearning_rate = 1e-3\nlambda = 0.3\nseed = 0\n"
     << "ablation = none\nsupervision = target_only\nout_dir = " << a.out
     << "/runs/msatl\n";

  std::cout << "toy corpus: " << corpus.target.size() << " target + ";
  for (std::size_t i = 0; i < corpus.sources.size(); ++i)
    std::cout << (i ? "+" : "") << corpus.sources[i].size();
  std::cout << " source samples in " << a.out << "\n";
  return 0;
}

int cmd_train(const TrainArgs& a) {
  require_file(a.config, "config file");
  RunConfig rc = RunConfig::load(a.config);
  if (a.ablation) rc.ablation = train::ablation_from_string(*a.ablation);
  if (a.seed) rc.seed = *a.seed;
  if (a.out_dir) rc.out_dir = *a.out_dir;
  rc.validate();

  const LoadedData d = load_data(rc);
  const auto run = train::run_training<float>(rc.model_config(), rc.train_config(),
                                              d.target_train, d.sources, d.target_val);
  std::cout << "trained " << rc.epochs << " epochs (" << to_string(rc.ablation)
            << "), best val dice " << run.history.best_val_dice << " at epoch "
            << run.history.best_epoch << "\n";

  const auto best =
      nn::load_checkpoint<float>(fs::path(rc.out_dir) / "checkpoint_best");
  const MetricReport report = train::evaluate(best, d.target_test);
  write_metrics(report, fs::path(rc.out_dir) / "metrics_test.json");
  std::cout << "test metrics (best checkpoint):\n";
  print_summary(report, std::cout);
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  require_file(a.config, "config file");
  require_file(a.checkpoint, "checkpoint");
  const RunConfig rc = RunConfig::load(a.config);
  const LoadedData d = load_data(rc);
  const auto model = nn::load_checkpoint<float>(a.checkpoint);
  const MetricReport report = train::evaluate(model, d.target_test);
  const fs::path out = a.out ? fs::path(*a.out)
                             : fs::path(rc.out_dir) / "metrics_test.json";
  write_metrics(report, out);
  print_summary(report, std::cout);
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_heatmap(const HeatmapArgs& a) {
  require_file(a.checkpoint, "checkpoint");
  require_file(a.image, "image");
  const auto model = nn::load_checkpoint<float>(a.checkpoint);
  const ImageU8 img = read_image(a.image);
  if (img.h != model.config().image_size || img.w != model.config().image_size)
    throw std::invalid_argument(
        "image is " + std::to_string(img.w) + "x" + std::to_string(img.h) +
        " but the model expects " + std::to_string(model.config().image_size) +
        "x" + std::to_string(model.config().image_size));
  fs::create_directories(a.out);
  for (int i = 1; i <= model.num_sources(); ++i) {
    const viz::Saliency sal =
        viz::normalize(viz::subnetwork_saliency(model, i, img));
    const ImageU8 overlay = viz::render_overlay(img, sal);
    const fs::path file = fs::path(a.out) / ("heatmap_source_" + std::to_string(i) + ".png");
    write_image(overlay, file);
    std::cout << "wrote " << file.string() << "\n";
  }
  return 0;
}

}  // namespace msatl::cli
