#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gal/checks.hpp"
#include "gal/gal.hpp"

namespace fs = std::filesystem;

namespace {

// Flag values that parse but make no sense -> exit 2, like CLI11 parse errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<int> parse_dims(const std::string& s, std::size_t n, const char* flag) {
  std::vector<int> dims;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(part, &used);
      if (used != part.size() || v < 1) throw std::invalid_argument(part);
      dims.push_back(v);
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": bad dimension '" + part + "' in '" + s + "'");
    }
  }
  if (dims.size() != n)
    throw UsageError(std::string(flag) + ": expected " + std::to_string(n) +
                     " dimensions like 32x32, got '" + s + "'");
  return dims;
}

std::vector<gal::SegSample> load_samples(const std::string& manifest_path) {
  const auto entries = gal::read_manifest(manifest_path);
  if (entries.empty())
    throw std::runtime_error(manifest_path + ": manifest lists no samples");
  std::vector<gal::SegSample> samples;
  for (const auto& e : entries) {
    gal::SegSample s;
    s.id = e.id;
    s.modality = gal::modality_from(e.modality);
    s.image = gal::load_raster(e.image_path);
    int lh = 0, lw = 0;
    s.label = gal::load_mask(e.label_path, &lh, &lw);
    if (lh != s.height() || lw != s.width())
      throw std::runtime_error(e.id + ": image " + gal::shape_str(s.image.shape()) +
                               " and label " + std::to_string(lh) + "x" +
                               std::to_string(lw) + " disagree");
    if (s.channels() != gal::modality_channels(s.modality))
      throw std::runtime_error(e.id + ": " + e.modality + " sample has " +
                               std::to_string(s.channels()) + " channels");
    gal::validate_sample(s);
    samples.push_back(std::move(s));
  }
  return samples;
}

gal::Modality corpus_modality(const std::vector<gal::SegSample>& samples) {
  for (const auto& s : samples)
    if (s.modality != samples.front().modality)
      throw std::runtime_error("manifest mixes modalities (" + s.id + " is " +
                               gal::modality_name(s.modality) + ", " +
                               samples.front().id + " is " +
                               gal::modality_name(samples.front().modality) + ")");
  return samples.front().modality;
}

int default_epochs(gal::Modality m, bool desk) {
  if (desk) return 30;
  return m == gal::Modality::kRgb ? 150 : 100;
}

// --- synth ---

struct SynthArgs {
  std::string modality, hw, out;
  int n = 0;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  if (a.n < 1) throw UsageError("--n must be >= 1, got " + std::to_string(a.n));
  const auto dims = parse_dims(a.hw, 2, "--hw");
  const gal::Modality m = [&] {
    try {
      return gal::modality_from(a.modality);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }();
  std::vector<gal::SegSample> samples;
  try {
    samples = gal::synth_generate(m, a.n, dims[0], dims[1], a.seed);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::error_code ec;
  fs::create_directories(fs::path(a.out) / "images", ec);
  fs::create_directories(fs::path(a.out) / "labels", ec);
  std::vector<gal::ManifestEntry> entries;
  for (const auto& s : samples) {
    const std::string ext = s.channels() == 3 ? ".ppm" : ".pgm";
    const std::string image_rel = "images/" + s.id + ext;
    const std::string label_rel = "labels/" + s.id + ".pgm";
    gal::write_raster(s.image, (fs::path(a.out) / image_rel).string());
    gal::write_mask(s.label, s.height(), s.width(),
                    (fs::path(a.out) / label_rel).string());
    entries.push_back({s.id, gal::modality_name(s.modality), image_rel, label_rel});
  }
  gal::write_manifest(entries, (fs::path(a.out) / "manifest.txt").string());
  std::cout << "# synth modality=" << a.modality << " n=" << a.n << " hw=" << a.hw
            << " seed=" << a.seed << "\n"
            << "wrote " << samples.size() << " samples under " << a.out << "\n";
  return 0;
}

// --- train ---

struct TrainArgs {
  std::string manifest, out_checkpoint;
  bool no_gal = false;
  bool desk = false;
  int epochs = 0;  // 0 = modality default
  double lr = 0.01, momentum = 0.9;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  if (a.epochs < 0) throw UsageError("--epochs must be positive");
  if (a.lr <= 0 || a.momentum < 0) throw UsageError("--lr/--momentum out of range");
  const auto samples = load_samples(a.manifest);
  const gal::Modality m = corpus_modality(samples);
  gal::NetConfig cfg;
  cfg.with_gal = !a.no_gal;
  cfg.in_channels = gal::modality_channels(m);
  gal::TrainConfig tc;
  tc.epochs = a.epochs > 0 ? a.epochs : default_epochs(m, a.desk);
  tc.lr = a.lr;
  tc.momentum = a.momentum;
  tc.seed = a.seed;

  const std::string header = "# train manifest=" + a.manifest +
                             " with_gal=" + (cfg.with_gal ? "1" : "0") +
                             " epochs=" + std::to_string(tc.epochs) +
                             " lr=" + gal::format3(tc.lr) +
                             " momentum=" + gal::format3(tc.momentum) +
                             " seed=" + std::to_string(a.seed);
  std::cout << header << "\n";

  gal::NetParams<float> net = gal::init_net<float>(cfg, a.seed);
  const std::vector<double> losses = gal::train_net(net, samples, tc);

  gal::save_net(net, a.out_checkpoint);
  std::ofstream log(a.out_checkpoint + ".loss", std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + a.out_checkpoint + ".loss");
  log << header << "\n";
  char buf[64];
  for (std::size_t e = 0; e < losses.size(); ++e) {
    std::snprintf(buf, sizeof buf, "epoch=%zu loss=%.6f", e + 1, losses[e]);
    log << buf << "\n";
  }
  std::snprintf(buf, sizeof buf, "final loss=%.6f", losses.back());
  std::cout << buf << "\nwrote " << a.out_checkpoint << "\n";
  return 0;
}

// --- eval ---

struct EvalArgs {
  std::string manifest, checkpoint, folds, out_maps;
  bool oracle = false;
};

void write_activation_maps(gal::NetParams<float>& net,
                           const std::vector<gal::SegSample>& samples,
                           const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  for (const auto& s : samples) {
    gal::Tape<float> tape;
    gal::ParamBinder<float> binder;
    gal::NetVars vars = gal::bind_net(tape, binder, net);
    gal::NetTaps taps;
    gal::net_forward(tape, tape.leaf(s.image), vars, net.config, &taps);
    const gal::Tensor<float>& f = tape.value(taps.encoder);
    gal::write_pgm(gal::export_activation_map(f), f.dim(0), f.dim(1),
                   (fs::path(dir) / (s.id + "_encoder.pgm")).string());
    if (net.config.with_gal) {
      const gal::Tensor<float>& g = tape.value(taps.gal);
      gal::write_pgm(gal::export_activation_map(g), g.dim(0), g.dim(1),
                     (fs::path(dir) / (s.id + "_gal.pgm")).string());
    }
  }
}

int run_eval(const EvalArgs& a) {
  if (!a.oracle && a.checkpoint.empty())
    throw UsageError("eval needs --checkpoint or --oracle");
  if (a.oracle && !a.checkpoint.empty())
    throw UsageError("--oracle and --checkpoint are mutually exclusive");
  const auto samples = load_samples(a.manifest);
  const int n = static_cast<int>(samples.size());

  gal::FoldSpec spec;
  if (a.folds.empty()) {
    spec.folds.push_back(std::vector<int>(n));
    for (int i = 0; i < n; ++i) spec.folds[0][i] = i;
  } else if (a.folds == "reference") {
    try {
      spec = gal::FoldSpec::reference(n);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  } else {
    int k = 0;
    try {
      k = std::stoi(a.folds);
    } catch (const std::exception&) {
      throw UsageError("--folds must be a count or 'reference', got '" + a.folds + "'");
    }
    try {
      spec = gal::FoldSpec::uniform(n, k);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }

  gal::TrainerFn predictor;
  if (a.oracle) {
    predictor = [](const std::vector<gal::SegSample>&,
                   const std::vector<gal::SegSample>& test, int) {
      std::vector<std::vector<int>> preds;
      for (const auto& s : test) preds.push_back(s.label);
      return preds;
    };
  } else {
    auto net = std::make_shared<gal::NetParams<float>>(
        gal::load_net<float>(a.checkpoint));
    if (net->config.in_channels != gal::modality_channels(corpus_modality(samples)))
      throw std::runtime_error(a.checkpoint + ": network expects " +
                               std::to_string(net->config.in_channels) +
                               "-channel input, manifest is " +
                               gal::modality_name(corpus_modality(samples)));
    predictor = [net](const std::vector<gal::SegSample>&,
                      const std::vector<gal::SegSample>& test, int) {
      std::vector<std::vector<int>> preds;
      for (const auto& s : test) preds.push_back(gal::predict_mask(*net, s));
      return preds;
    };
    if (!a.out_maps.empty()) write_activation_maps(*net, samples, a.out_maps);
  }
  if (a.oracle && !a.out_maps.empty())
    throw UsageError("--out-maps needs a real checkpoint, not --oracle");

  const gal::MetricReport report = gal::kfold_run(samples, spec, predictor);
  std::cout << "# eval manifest=" << a.manifest
            << " predictor=" << (a.oracle ? "oracle" : a.checkpoint)
            << " folds=" << spec.folds.size() << "\n"
            << gal::format_report(report);
  return 0;
}

// --- bench ---

struct BenchArgs {
  std::string manifest;
  int seeds = 0;
  int epochs = 30;
  double lr = 0.01, momentum = 0.9;
};

int run_bench(const BenchArgs& a) {
  if (a.seeds < 1) throw UsageError("--seeds must be >= 1, got " + std::to_string(a.seeds));
  if (a.epochs < 1) throw UsageError("--epochs must be >= 1");
  const auto samples = load_samples(a.manifest);
  const gal::Modality m = corpus_modality(samples);
  const int n = static_cast<int>(samples.size());
  const int held = std::max(1, n / 4);
  if (n - held < 1) throw std::runtime_error("manifest too small to split");
  std::vector<gal::SegSample> train(samples.begin(), samples.end() - held);
  std::vector<gal::SegSample> test(samples.end() - held, samples.end());

  std::cout << "# bench manifest=" << a.manifest << " seeds=" << a.seeds
            << " epochs=" << a.epochs << " train=" << train.size()
            << " held_out=" << test.size() << "\n";

  auto fit = [&](bool with_gal, std::uint64_t seed) {
    gal::NetConfig cfg;
    cfg.with_gal = with_gal;
    cfg.in_channels = gal::modality_channels(m);
    gal::TrainConfig tc;
    tc.epochs = a.epochs;
    tc.lr = a.lr;
    tc.momentum = a.momentum;
    tc.seed = seed;
    gal::NetParams<float> net = gal::init_net<float>(cfg, seed);
    gal::train_net(net, train, tc);
    return gal::evaluate_net(net, test);
  };

  double sum_diou = 0, sum_dfsc = 0;
  int wins = 0;
  for (int s = 1; s <= a.seeds; ++s) {
    const gal::MetricRow with = fit(true, static_cast<std::uint64_t>(s));
    const gal::MetricRow without = fit(false, static_cast<std::uint64_t>(s));
    const double diou = with.iou - without.iou;
    const double dfsc = with.fsc - without.fsc;
    sum_diou += diou;
    sum_dfsc += dfsc;
    if (diou > 0) ++wins;
    std::cout << "seed=" << s << " with_gal_iou=" << gal::format3(with.iou)
              << " no_gal_iou=" << gal::format3(without.iou)
              << " delta_iou=" << gal::format3(diou)
              << " with_gal_fsc=" << gal::format3(with.fsc)
              << " no_gal_fsc=" << gal::format3(without.fsc)
              << " delta_fsc=" << gal::format3(dfsc) << "\n";
  }
  std::cout << "mean delta_iou=" << gal::format3(sum_diou / a.seeds)
            << " delta_fsc=" << gal::format3(sum_dfsc / a.seeds) << " wins=" << wins
            << "/" << a.seeds << "\n";
  return 0;
}

// --- gradcheck ---

struct GradcheckArgs {
  std::string size = "4x5x6";
  std::uint64_t seed = 0;
};

int run_gradcheck(const GradcheckArgs& a) {
  const auto dims = parse_dims(a.size, 3, "--size");
  if (dims[2] % 2 != 0)
    throw UsageError("--size: channel count must be even, got " +
                     std::to_string(dims[2]));
  if (dims[0] < 2 || dims[1] < 2)
    throw UsageError("--size: spatial dims must be >= 2, got " + a.size);
  std::cout << "# gradcheck size=" << a.size << " seed=" << a.seed << "\n";
  const auto results =
      gal::run_gradcheck_suite(dims[0], dims[1], dims[2], a.seed);
  std::vector<std::string> offenders;
  char buf[128];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "op=%s max_rel_err=%.3e %s", r.name.c_str(),
                  r.err, r.ok ? "ok" : "FAIL");
    std::cout << buf << "\n";
    if (!r.ok) offenders.push_back(r.name);
  }
  if (offenders.empty()) {
    std::cout << "all " << results.size() << " checks passed\n";
    return 0;
  }
  std::cout << "failed:";
  for (const auto& n : offenders) std::cout << " " << n;
  std::cout << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph attention layer toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* cs = app.add_subcommand("synth", "generate a synthetic dataset");
  cs->add_option("--modality", synth.modality, "rgb|disp|tdisp")->required();
  cs->add_option("--n", synth.n, "sample count")->required();
  cs->add_option("--hw", synth.hw, "size, e.g. 32x32")->required();
  cs->add_option("--seed", synth.seed, "root seed");
  cs->add_option("--out", synth.out, "output directory")->required();

  TrainArgs train;
  auto* ct = app.add_subcommand("train", "train a segmentation network");
  ct->add_option("--manifest", train.manifest, "dataset manifest")->required();
  auto* wg = ct->add_flag("--with-gal", "enable the GAL branch (default)");
  auto* ng = ct->add_flag("--no-gal", "baseline without the GAL branch");
  wg->excludes(ng);
  ct->add_option("--epochs", train.epochs, "epoch count (default per modality)");
  ct->add_flag("--desk", train.desk, "desk-scale default epochs (30)");
  ct->add_option("--lr", train.lr, "learning rate");
  ct->add_option("--momentum", train.momentum, "momentum");
  ct->add_option("--seed", train.seed, "root seed");
  ct->add_option("--out-checkpoint", train.out_checkpoint, "checkpoint path")->required();

  EvalArgs eval;
  auto* ce = app.add_subcommand("eval", "evaluate a checkpoint or oracle");
  ce->add_option("--manifest", eval.manifest, "dataset manifest")->required();
  ce->add_option("--checkpoint", eval.checkpoint, "trained checkpoint");
  ce->add_flag("--oracle", eval.oracle, "echo labels (harness self-test)");
  ce->add_option("--folds", eval.folds, "fold count or 'reference'");
  ce->add_option("--out-maps", eval.out_maps, "write mean activation maps here");

  BenchArgs bench;
  auto* cb = app.add_subcommand("bench", "paired with/without-GAL comparison");
  cb->add_option("--manifest", bench.manifest, "dataset manifest")->required();
  cb->add_option("--seeds", bench.seeds, "number of paired seeds")->required();
  cb->add_option("--epochs", bench.epochs, "epochs per training");
  cb->add_option("--lr", bench.lr, "learning rate");
  cb->add_option("--momentum", bench.momentum, "momentum");

  GradcheckArgs gradcheck;
  auto* cg = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  cg->add_option("--size", gradcheck.size, "instance size HxWxC");
  cg->add_option("--seed", gradcheck.seed, "root seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (cs->parsed()) return run_synth(synth);
    if (ct->parsed()) {
      train.no_gal = ng->count() > 0;
      return run_train(train);
    }
    if (ce->parsed()) return run_eval(eval);
    if (cb->parsed()) return run_bench(bench);
    if (cg->parsed()) return run_gradcheck(gradcheck);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
