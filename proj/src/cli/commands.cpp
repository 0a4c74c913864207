#include "bitforge/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>

#include "bitforge/cascade.hpp"
#include "bitforge/config.hpp"
#include "bitforge/gradcheck_suite.hpp"
#include "bitforge/image_io.hpp"
#include "bitforge/run_dir.hpp"
#include "bitforge/training.hpp"

namespace bitforge::cli {
namespace {

namespace fs = std::filesystem;

class MissingFile : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "runs";
  std::vector<std::string> sets;
  std::string stages;
  bool no_sr = false;
  std::optional<int> depth_in, depth_out;
};

void add_common(CLI::App& app, CommonFlags& f) {
  app.add_option("--config", f.config, "key=value config file");
  app.add_option("--seed", f.seed, "experiment seed");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--set", f.sets, "override key=value (repeatable)");
  app.add_option("--stages", f.stages, "depth range b_L:b_H");
  app.add_flag("--no-sr", f.no_sr, "drop the SR trunks (inception-only extractor)");
  app.add_option("--depth-in", f.depth_in, "input depth b_L");
  app.add_option("--depth-out", f.depth_out, "output depth b_H");
}

TrainConfig build_config(const CommonFlags& f) {
  std::vector<std::string> overrides = f.sets;
  if (f.seed) overrides.push_back("seed=" + std::to_string(*f.seed));
  if (!f.stages.empty()) {
    const auto colon = f.stages.find(':');
    if (colon == std::string::npos) throw ConfigError("--stages expects b_L:b_H, got " + f.stages);
    overrides.push_back("depth_in=" + f.stages.substr(0, colon));
    overrides.push_back("depth_out=" + f.stages.substr(colon + 1));
  }
  if (f.depth_in) overrides.push_back("depth_in=" + std::to_string(*f.depth_in));
  if (f.depth_out) overrides.push_back("depth_out=" + std::to_string(*f.depth_out));
  if (f.no_sr) overrides.push_back("arch.use_sr=false");
  if (!f.config.empty() && !fs::exists(f.config)) throw MissingFile("config file " + f.config);
  return load_config(f.config, overrides);
}

// Serializes progress lines from stage workers.
train::LogFn line_logger(std::ostream& out) {
  auto mu = std::make_shared<std::mutex>();
  return [&out, mu](const std::string& line) {
    std::lock_guard lock(*mu);
    out << line << '\n' << std::flush;
  };
}

void write_rows(const fs::path& path, const std::vector<metrics::MetricRow>& rows) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  metrics::write_csv(f, rows);
}

train::Trunks obtain_trunks(const TrainConfig& cfg, RunDir& run, const train::LogFn& log) {
  if (!cfg.arch.use_sr) return {};
  const auto p2 = run.file("sr_x2.ckpt"), p4 = run.file("sr_x4.ckpt");
  if (fs::exists(p2) && fs::exists(p4)) {
    return {std::make_shared<const nets::SrTrunk>(nets::load_trunk(p2)),
            std::make_shared<const nets::SrTrunk>(nets::load_trunk(p4))};
  }
  auto r = train::pretrain_sr(cfg, log);
  nets::save_trunk(p2, *r.trunks.x2);
  nets::save_trunk(p4, *r.trunks.x4);
  {
    std::ofstream f(run.file("sr_loss.csv"), std::ios::binary | std::ios::trunc);
    f << "epoch,scale,l1\n";
    for (std::size_t e = 0; e < r.loss_x2.size(); ++e) {
      f << e + 1 << ",x2," << metrics::format_value(r.loss_x2[e]) << "\n";
    }
    for (std::size_t e = 0; e < r.loss_x4.size(); ++e) {
      f << e + 1 << ",x4," << metrics::format_value(r.loss_x4[e]) << "\n";
    }
  }
  for (const char* name : {"sr_x2.ckpt", "sr_x2.ckpt.manifest", "sr_x4.ckpt",
                           "sr_x4.ckpt.manifest", "sr_loss.csv"}) {
    run.record(name);
  }
  return r.trunks;
}

bool stages_present(const TrainConfig& cfg, const RunDir& run) {
  for (int d : cfg.stage_depths()) {
    if (!fs::exists(run.file(stage_file(d)))) return false;
  }
  return true;
}

std::vector<nets::SubmodelWeights> load_stages(const TrainConfig& cfg, const fs::path& dir) {
  std::vector<nets::SubmodelWeights> stages;
  for (int d : cfg.stage_depths()) {
    const auto p = dir / stage_file(d);
    if (!fs::exists(p)) throw MissingFile("stage checkpoint " + p.string());
    stages.push_back(nets::load_submodel(p));
    if (stages.back().input_depth != d) {
      throw std::runtime_error(p.string() + " holds the stage for depth " +
                               std::to_string(stages.back().input_depth));
    }
  }
  return stages;
}

void train_into(const TrainConfig& cfg, RunDir& run, std::ostream& out) {
  const auto log = line_logger(out);
  const train::Trunks trunks = obtain_trunks(cfg, run, log);
  const auto split = data::split_heldout(train::bit_depth_images(cfg), cfg.heldout_fraction);
  const auto results = train::train_stages(cfg, trunks, split.train, log);
  for (const auto& r : results) {
    if (r.trunk_checksum_before != r.trunk_checksum_after) {
      throw std::runtime_error("frozen SR trunks changed during training");
    }
    const int d = r.weights.input_depth;
    const std::string ckpt = stage_file(d);
    nets::save_submodel(run.file(ckpt), r.weights);
    char name[32];
    std::snprintf(name, sizeof name, "loss_%02d.csv", d + 1);
    {
      std::ofstream f(run.file(name), std::ios::binary | std::ios::trunc);
      f << "epoch,optimizer,bce\n";
      for (const auto& e : r.log) {
        f << e.epoch << ',' << optim::to_string(e.optimizer) << ','
          << metrics::format_value(e.loss) << '\n';
      }
    }
    run.record(ckpt);
    run.record(ckpt + ".manifest");
    run.record(name);
  }
}

std::vector<nets::SubmodelWeights> trained_stages(const TrainConfig& cfg, RunDir& run,
                                                  std::ostream& out) {
  if (!stages_present(cfg, run)) train_into(cfg, run, out);
  return load_stages(cfg, run.path());
}

std::vector<PlanarImage> heldout(const TrainConfig& cfg) {
  return data::split_heldout(train::bit_depth_images(cfg), cfg.heldout_fraction).heldout;
}

// -- verbs --------------------------------------------------------------------

int verb_synth(const CommonFlags& f, std::ostream& out) {
  const TrainConfig cfg = build_config(f);
  RunDir run(f.out, cfg);
  run.write_manifest();
  const auto images = data::synth_dataset(cfg.dataset_spec());
  data::write_dataset(run.file("dataset"), images);
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[40];
    std::snprintf(name, sizeof name, "dataset/img_%04zu.png", i);
    run.record(name);
  }
  out << "synth: " << images.size() << " images in " << run.file("dataset").string() << "\n";
  return 0;
}

int verb_pretrain(const CommonFlags& f, std::ostream& out) {
  TrainConfig cfg = build_config(f);
  if (!cfg.arch.use_sr) throw ConfigError("pretrain-sr needs arch.use_sr=true");
  RunDir run(f.out, cfg);
  run.write_manifest();
  obtain_trunks(cfg, run, line_logger(out));
  out << "pretrain-sr: trunks in " << run.path().string() << "\n";
  return 0;
}

int verb_train(const CommonFlags& f, std::ostream& out) {
  const TrainConfig cfg = build_config(f);
  RunDir run(f.out, cfg);
  run.write_manifest();
  train_into(cfg, run, out);
  out << "train: " << cfg.stage_depths().size() << " stages in " << run.path().string() << "\n";
  return 0;
}

int verb_eval(const CommonFlags& f, const std::string& run_path, std::ostream& out) {
  const TrainConfig cfg = build_config(f);
  RunDir run(f.out, cfg);
  const fs::path ckpt_dir = run_path.empty() ? run.path() : fs::path(run_path);
  const auto stages = load_stages(cfg, ckpt_dir);
  run.write_manifest();
  const auto rows = cascade::evaluate(heldout(cfg), cascade::Method::kCascade, cfg.depth_in,
                                      cfg.depth_out, stages);
  write_rows(run.file("metrics.csv"), rows);
  run.record("metrics.csv");
  const auto& mean = rows.back();
  out << "eval: cascade " << cfg.depth_in << "->" << cfg.depth_out
      << " psnr=" << metrics::format_value(mean.psnr) << " ssim=" << metrics::format_value(mean.ssim)
      << "\n";
  return 0;
}

int verb_compare(const CommonFlags& f, std::ostream& out) {
  const TrainConfig cfg = build_config(f);
  RunDir run(f.out, cfg);
  run.write_manifest();
  const auto stages = trained_stages(cfg, run, out);
  const auto gt = heldout(cfg);
  std::vector<metrics::MetricRow> rows;
  for (auto m : {cascade::Method::kZeroPad, cascade::Method::kReplicate, cascade::Method::kGain,
                 cascade::Method::kCascade}) {
    rows.push_back(cascade::evaluate(gt, m, cfg.depth_in, cfg.depth_out, stages).back());
  }
  write_rows(run.file("compare.csv"), rows);
  run.record("compare.csv");
  metrics::write_csv(out, rows);
  return 0;
}

int verb_ablate(const CommonFlags& f, std::ostream& out) {
  TrainConfig base = build_config(f);
  std::vector<metrics::MetricRow> rows;
  std::optional<RunDir> with_sr_dir;
  for (bool use_sr : {true, false}) {
    TrainConfig cfg = base;
    cfg.arch.use_sr = use_sr;
    cfg.validate();
    RunDir run(f.out, cfg);
    run.write_manifest();
    const auto stages = trained_stages(cfg, run, out);
    auto mean = cascade::evaluate(heldout(cfg), cascade::Method::kCascade, cfg.depth_in,
                                  cfg.depth_out, stages)
                    .back();
    mean.method = use_sr ? "with_sr" : "no_sr";
    rows.push_back(mean);
    if (use_sr) with_sr_dir.emplace(run);
  }
  write_rows(with_sr_dir->file("ablation.csv"), rows);
  with_sr_dir->record("ablation.csv");
  metrics::write_csv(out, rows);
  return 0;
}

int verb_infer(const CommonFlags& f, const std::string& input, const std::string& output,
               const std::string& run_path, std::ostream& out) {
  if (!fs::exists(input)) throw MissingFile("input image " + input);
  PlanarImage img = io::read_png(input);
  CommonFlags g = f;
  if (!g.depth_in && g.stages.empty()) g.depth_in = img.bit_depth();
  const TrainConfig cfg = build_config(g);
  if (img.bit_depth() != cfg.depth_in) {
    if (img.bit_depth() < cfg.depth_in) {
      throw ConfigError("input image has depth " + std::to_string(img.bit_depth()) +
                        ", below depth_in " + std::to_string(cfg.depth_in));
    }
    img = quantize(img, cfg.depth_in);
  }
  const fs::path ckpt_dir = run_path.empty() ? RunDir(f.out, cfg).path() : fs::path(run_path);
  const auto stages = load_stages(cfg, ckpt_dir);
  const PlanarImage result = cascade::cascade_infer(img, stages, cfg.depth_out);
  fs::path dst = output.empty() ? fs::path(f.out) / "expanded.png" : fs::path(output);
  if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
  {
    std::ofstream m(dst.string() + ".manifest.txt", std::ios::binary | std::ios::trunc);
    m << "# bitforge infer manifest\n" << cfg.to_text() << "# input " << input << "\n";
  }
  io::write_png(dst, result);
  out << "infer: " << cfg.depth_in << "->" << cfg.depth_out << " wrote " << dst.string() << "\n";
  return 0;
}

int verb_gradcheck(const CommonFlags& f, std::ostream& out) {
  const std::uint64_t seed = f.seed.value_or(0);
  auto cases = gradcheck::standard_cases(seed);
  cases.push_back(gradcheck::submodel_case(seed));
  std::size_t failed = 0;
  out << "case,max_rel_error,checked,straddled,status\n";
  for (const auto& c : cases) {
    const auto r = gradcheck::run_case(c);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", r.max_rel_error);
    out << c.name << ',' << buf << ',' << r.checked << ',' << r.straddled << ','
        << (r.passed ? "pass" : "FAIL") << '\n';
    if (!r.passed) ++failed;
  }
  if (failed > 0) {
    throw std::runtime_error(std::to_string(failed) + " gradient checks failed");
  }
  return 0;
}

std::string quoted(std::string s) {
  for (auto& ch : s) {
    if (ch == '"') ch = '\'';
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return "\"" + s + "\"";
}

int fail(std::ostream& err, const char* kind, const std::string& message, int status) {
  err << "error: kind=" << kind << " message=" << quoted(message) << std::endl;
  return status;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"bitforge: bit-plane cascade bit-depth recovery"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string input, output, run_path;

  auto* synth = app.add_subcommand("synth", "write the synthetic 16-bit dataset");
  auto* pretrain = app.add_subcommand("pretrain-sr", "pretrain the x2 and x4 SR trunks");
  auto* trn = app.add_subcommand("train", "train every cascade stage");
  auto* infer = app.add_subcommand("infer", "expand one image through the cascade");
  auto* eval = app.add_subcommand("eval", "cascade metrics on the held-out images");
  auto* compare = app.add_subcommand("compare", "classical expanders against the cascade");
  auto* ablate = app.add_subcommand("ablate", "cascade with and without SR trunks");
  auto* grad = app.add_subcommand("gradcheck", "finite-difference checks of every op");
  for (auto* sub : {synth, pretrain, trn, infer, eval, compare, ablate, grad}) {
    add_common(*sub, flags);
  }
  infer->add_option("--input", input, "low-depth PNG")->required();
  infer->add_option("--output", output, "expanded PNG");
  infer->add_option("--run", run_path, "directory holding stage checkpoints");
  eval->add_option("--run", run_path, "directory holding stage checkpoints");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return fail(err, "usage", e.what(), 2);
  }

  try {
    if (synth->parsed()) return verb_synth(flags, out);
    if (pretrain->parsed()) return verb_pretrain(flags, out);
    if (trn->parsed()) return verb_train(flags, out);
    if (infer->parsed()) return verb_infer(flags, input, output, run_path, out);
    if (eval->parsed()) return verb_eval(flags, run_path, out);
    if (compare->parsed()) return verb_compare(flags, out);
    if (ablate->parsed()) return verb_ablate(flags, out);
    if (grad->parsed()) return verb_gradcheck(flags, out);
  } catch (const ConfigError& e) {
    return fail(err, "config", e.what(), 3);
  } catch (const MissingFile& e) {
    return fail(err, "missing_file", e.what(), 4);
  } catch (const train::DivergenceError& e) {
    return fail(err, "diverged", e.what(), 5);
  } catch (const std::exception& e) {
    return fail(err, "runtime", e.what(), 1);
  }
  return fail(err, "usage", "no verb given", 2);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv = {"bitforge"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace bitforge::cli
