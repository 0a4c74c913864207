// Acceptance run: one PASS/FAIL line per criterion, details indented below.
//
//   acceptance [--work DIR] [--only 1,2,...]
//
// Criteria 6 to 9 train real models through the command-line front end and
// take a while on few cores. DIR is wiped first so nothing is reused from
// an earlier invocation.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bitforge/bitcore.hpp"
#include "bitforge/cascade.hpp"
#include "bitforge/checkpoint.hpp"
#include "bitforge/cli.hpp"
#include "bitforge/config.hpp"
#include "bitforge/dataset.hpp"
#include "bitforge/gradcheck.hpp"
#include "bitforge/gradcheck_suite.hpp"
#include "bitforge/metrics.hpp"
#include "bitforge/nets.hpp"
#include "bitforge/ops.hpp"
#include "bitforge/optim.hpp"
#include "bitforge/run_dir.hpp"
#include "bitforge/training.hpp"
#include "oracles.hpp"

using namespace bitforge;
namespace fs = std::filesystem;
using tensor::Tensor;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
  void note(const std::string& what) { notes.push_back("     " + what); }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs one CLI verb in-process; throws with its error line on failure.
void cli_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  if (cli::run(args, out, err) != 0) throw std::runtime_error(err.str());
}

std::vector<metrics::MetricRow> read_rows(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("missing " + csv.string());
  std::string line;
  std::getline(in, line);
  std::vector<metrics::MetricRow> rows;
  while (std::getline(in, line)) {
    std::istringstream s(line);
    metrics::MetricRow r;
    std::string field;
    std::getline(s, r.method, ',');
    std::getline(s, field, ',');
    r.depth_in = std::stoi(field);
    std::getline(s, field, ',');
    r.depth_out = std::stoi(field);
    std::getline(s, field, ',');
    r.psnr = field == "inf" ? INFINITY : std::stod(field);
    std::getline(s, field, ',');
    r.ssim = std::stod(field);
    rows.push_back(r);
  }
  return rows;
}

const metrics::MetricRow& row(const std::vector<metrics::MetricRow>& rows, const std::string& m) {
  for (const auto& r : rows) {
    if (r.method == m) return r;
  }
  throw std::runtime_error("no row " + m);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("missing " + p.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

// -- 1 --------------------------------------------------------------------------

Outcome codec_exactness() {
  Outcome o;
  Rng rng(derive_seed(0, "acceptance-codec"));
  bool all_round_trip = true;
  for (int b = 1; b <= 16; ++b) {
    // 100000 samples = 3 x 200 x 167 (+ a few)
    PlanarImage img(200, 167, b);
    for (auto& v : img.mutable_samples()) v = static_cast<std::uint16_t>(rng.below(1u << b));
    std::vector<BitPlane> planes;
    for (int k = 1; k <= b; ++k) {
      const BitPlane p = extract_bitplane(img, k);
      for (std::size_t i = 0; i < img.size(); i += 97) {
        all_round_trip &= p.bits()[i] == (oracle::bit_string(img.samples()[i], b)[k - 1] == '1');
      }
      planes.push_back(p);
    }
    all_round_trip &= assemble(planes) == img;
  }
  o.require(all_round_trip, "extract/assemble round trip, b = 1..16, 100200 random samples each");

  std::vector<std::uint16_t> every(3 * 256 * 256);
  for (std::size_t i = 0; i < every.size(); ++i) every[i] = static_cast<std::uint16_t>(i & 0xffff);
  const PlanarImage full(256, 256, 16, every);
  std::vector<BitPlane> planes;
  for (int k = 1; k <= 16; ++k) planes.push_back(extract_bitplane(full, k));
  o.require(assemble(planes) == full, "exhaustive 0..65535 round trip at b = 16");

  bool identity = true;
  std::size_t pairs = 0;
  for (int hi : {8, 12, 16}) {
    PlanarImage g(150, 100, hi);
    for (auto& v : g.mutable_samples()) v = static_cast<std::uint16_t>(rng.below(1u << hi));
    for (int b = 1; b < hi; ++b) {
      const PlanarImage next = b + 1 == hi ? g : quantize(g, b + 1);
      identity &= append_lsb(quantize(g, b), extract_bitplane(next, b + 1)) == next;
      ++pairs;
    }
  }
  o.require(identity, "append_lsb oracle identity on all " + std::to_string(pairs) +
                          " (b_H, b) pairs, b_H in {8, 12, 16}");
  return o;
}

// -- 2 --------------------------------------------------------------------------

Outcome classical_baselines() {
  Outcome o;
  Rng rng(derive_seed(0, "acceptance-baselines"));
  std::vector<PlanarImage> gt;
  for (int i = 0; i < 10; ++i) gt.push_back(data::uniform_random_image(256, 256, 8, rng));
  const double want = oracle::zero_pad_psnr_4_to_8();
  const auto zero = cascade::evaluate(gt, cascade::Method::kZeroPad, 4, 8).back();
  const auto gain = cascade::evaluate(gt, cascade::Method::kGain, 4, 8).back();
  o.require(std::abs(zero.psnr - want) <= 0.10,
            "zero_pad 4->8 mean PSNR " + fmt("%.4f", zero.psnr) + " dB vs oracle " +
                fmt("%.4f", want) + " (tolerance 0.10)");
  o.require(gain.psnr > zero.psnr, "gain " + fmt("%.4f", gain.psnr) + " dB > zero_pad");
  bool same = true;
  for (const auto& g : gt) {
    const PlanarImage low = quantize(g, 4);
    same &= bit_replicate_expand(low, 8) == gain_expand(low, 8);
  }
  o.require(same, "replicate == gain bitwise for 4->8 on all 10 images");
  return o;
}

// -- 3 --------------------------------------------------------------------------

Outcome differentiation() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  auto cases = gradcheck::standard_cases(0);
  cases.push_back(gradcheck::submodel_case(0));
  std::map<std::string, int> shapes;
  double worst = 0.0;
  std::string worst_name;
  std::size_t failed = 0, probes = 0, skipped = 0;
  for (auto& c : cases) {
    c.options.step = 1e-5;
    c.options.tolerance = 1e-4;
    const auto r = gradcheck::run_case(c);
    if (!r.passed) {
      ++failed;
      o.note("failed " + c.name + ": " + r.worst);
    }
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = c.name;
    }
    probes += r.checked;
    skipped += r.straddled;
    shapes[c.name.substr(0, c.name.find('['))]++;
  }
  std::size_t thin = 0;
  for (const auto& [op, n] : shapes) {
    if (op != "submodel" && n < 3) ++thin;
  }
  o.require(failed == 0, std::to_string(cases.size()) + " cases, " + std::to_string(probes) +
                             " probes, worst relative error " + fmt("%.2e", worst) + " (" +
                             worst_name + ")");
  o.require(thin == 0, std::to_string(shapes.size() - 1) + " ops/blocks, each on >= 3 shapes");
  o.note(std::to_string(skipped) + " probes straddled a ReLU/max/abs kink and were set aside");
  o.require(shapes.count("submodel") == 1, "full submodel case included");

  // x^2 with its factor 2 dropped from the backward rule
  auto corrupted = [](const Tensor& x) {
    std::vector<double> d(x.data().begin(), x.data().end());
    for (auto& v : d) v *= v;
    return Tensor::from_op("bad_square", x.shape(), std::move(d), {x},
                           [](tensor::detail::Node& self) {
                             auto& gx = self.parents[0]->grad_buffer();
                             for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
                           });
  };
  Rng rng(1);
  std::vector<double> xv(12);
  for (auto& v : xv) v = rng.normal();
  const Tensor x({3, 4}, xv, true);
  const auto neg = gradcheck::grad_check(
      [&](std::span<const Tensor> in) { return ops::sum(corrupted(in[0])); },
      std::vector<Tensor>{x});
  o.require(!neg.passed, "corrupted gradient rule rejected (relative error " +
                             fmt("%.2f", neg.max_rel_error) + ")");
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "runtime " + fmt("%.1f", secs) + " s (< 60 s)");
  return o;
}

// -- 4 --------------------------------------------------------------------------

Outcome optimizers() {
  Outcome o;
  double worst_sgd = 0.0, worst_adam = 0.0;
  for (double decay : {0.0, 1e-4}) {
    std::vector<Tensor> ps = {Tensor({1}, {0.7}, true)}, pa = {Tensor({1}, {-0.3}, true)};
    auto ss = optim::OptimizerState::sgd(1e-3, 0.9, decay);
    auto sa = optim::OptimizerState::adam(1e-3, decay);
    oracle::SgdScalar rs{1e-3, 0.9, decay};
    oracle::AdamScalar ra{1e-3, decay};
    double ws = 0.7, wa = -0.3;
    for (int t = 1; t <= 100; ++t) {
      const double g = std::cos(1.3 * t) - 0.2;
      ps[0].mutable_grad()[0] = g;
      pa[0].mutable_grad()[0] = g;
      optim::step(ps, ss);
      optim::step(pa, sa);
      ws = rs.step(ws, g);
      wa = ra.step(wa, g);
      worst_sgd = std::max(worst_sgd, std::abs(ps[0].data()[0] - ws));
      worst_adam = std::max(worst_adam, std::abs(pa[0].data()[0] - wa));
    }
  }
  o.require(worst_sgd <= 1e-12, "SGD-momentum max deviation " + fmt("%.1e", worst_sgd) +
                                    " over 100 steps (decay 0 and 1e-4)");
  o.require(worst_adam <= 1e-12, "Adam max deviation " + fmt("%.1e", worst_adam));
  return o;
}

// -- 5 --------------------------------------------------------------------------

Outcome untrained_anchor() {
  Outcome o;
  Rng rng(derive_seed(0, "acceptance-anchor"));
  nets::ArchConfig arch;
  auto sr2 = std::make_shared<nets::SrTrunk>(
      nets::SrTrunk::make({nets::ScaleTag::kX2, arch.trunk_width, arch.sr_res_blocks, true}, rng));
  auto sr4 = std::make_shared<nets::SrTrunk>(
      nets::SrTrunk::make({nets::ScaleTag::kX4, arch.trunk_width, arch.sr_res_blocks, true}, rng));
  auto w = nets::make_submodel(arch, 4, sr2, sr4, rng);
  nets::zero_learnable(w);
  double worst = 0.0;
  const auto images = data::synth_dataset({4, 40, data::SynthSpec{}.generators, 3});
  for (int trial = 0; trial < 4; ++trial) {
    const std::size_t n = 1 + trial;
    std::vector<PlanarImage> batch;
    for (std::size_t i = 0; i < n; ++i) {
      batch.push_back(quantize(images[(trial + i) % images.size()], 4).crop(trial, trial, 32, 32));
    }
    const Tensor z = nets::submodel_forward(w, nets::images_to_tensor(batch));
    std::vector<double> y(z.numel());
    for (auto& v : y) v = static_cast<double>(rng.below(2));
    const double bce = ops::bce_with_logits(z, Tensor(z.shape(), y)).item();
    worst = std::max(worst, std::abs(bce - std::log(2.0)));
  }
  o.require(worst <= 1e-6, "zero learnable weights: |BCE - ln 2| <= " + fmt("%.1e", worst) +
                               " on 4 batches (default architecture, trunks live)");
  return o;
}

// -- 6 to 9 share trained runs ----------------------------------------------------

struct Workspace {
  fs::path root;
  fs::path runs() const { return root / "runs"; }
};

Outcome learning_gate(const Workspace& ws) {
  Outcome o;
  const TrainConfig cfg = load_config({}, {"seed=0"});
  o.note("default config: patch " + std::to_string(cfg.patch_size) + ", batch " +
         std::to_string(cfg.batch_size) + ", " + std::to_string(cfg.epochs_total) + " epochs (" +
         std::to_string(cfg.epochs_sgd) + " SGD) x " + std::to_string(cfg.patches_per_epoch) +
         " patches, stage threads " + std::to_string(train::thread_cap()));
  const auto t0 = std::chrono::steady_clock::now();
  cli_run({"compare", "--seed", "0", "--out", ws.runs().string()});
  const double secs = seconds_since(t0);
  const RunDir run(ws.runs(), cfg);
  const auto rows = read_rows(run.file("compare.csv"));
  const double zero = row(rows, "zero_pad").psnr, casc = row(rows, "cascade").psnr;
  o.note("held-out mean PSNR: zero_pad " + fmt("%.3f", zero) + ", replicate " +
         fmt("%.3f", row(rows, "replicate").psnr) + ", gain " + fmt("%.3f", row(rows, "gain").psnr) +
         ", cascade " + fmt("%.3f", casc) + " dB");

  const auto stage = nets::load_submodel(run.file(stage_file(4)));
  const auto heldout = data::split_heldout(train::bit_depth_images(cfg), cfg.heldout_fraction).heldout;
  double hits = 0.0, total = 0.0;
  for (const auto& gt : heldout) {
    const BitPlane truth = extract_bitplane(quantize(gt, 5), 5);
    const double n = static_cast<double>(truth.size());
    hits += cascade::plane_accuracy(cascade::predict_plane(quantize(gt, 4), stage), truth) * n;
    total += n;
  }
  const double acc = hits / total;
  o.require(acc > 0.55, "4->5 held-out plane accuracy " + fmt("%.4f", acc) + " (> 0.55, " +
                            std::to_string(heldout.size()) + " images)");
  o.require(casc - zero >= 1.0,
            "4->8 cascade beats zero_pad by " + fmt("%.3f", casc - zero) + " dB (>= 1.0)");
  o.note("pretrain + train + evaluate took " + fmt("%.0f", secs) + " s");
  return o;
}

Outcome ablation(const Workspace& ws) {
  Outcome o;
  int wins = 0;
  for (std::uint64_t seed : {0, 1, 2}) {
    cli_run({"ablate", "--seed", std::to_string(seed), "--out", ws.runs().string()});
    TrainConfig cfg = load_config({}, {"seed=" + std::to_string(seed)});
    const auto rows = read_rows(RunDir(ws.runs(), cfg).file("ablation.csv"));
    const double with = row(rows, "with_sr").psnr, without = row(rows, "no_sr").psnr;
    const bool win = with >= without;
    wins += win;
    o.note("seed " + std::to_string(seed) + ": with_sr " + fmt("%.3f", with) + " dB, no_sr " +
           fmt("%.3f", without) + " dB" + (win ? "" : "  (no_sr ahead)"));
  }
  o.require(wins >= 2, "with-SR >= without-SR in " + std::to_string(wins) + " of 3 seeds (need 2)");
  return o;
}

Outcome determinism(const Workspace& ws) {
  Outcome o;
  // the seed-0 default run from criterion 6 is one side; a fresh identical
  // train + eval in another directory is the other
  const fs::path twin = ws.root / "twin";
  cli_run({"train", "--seed", "0", "--out", twin.string()});
  cli_run({"eval", "--seed", "0", "--out", twin.string()});
  cli_run({"eval", "--seed", "0", "--out", ws.runs().string()});
  const TrainConfig cfg = load_config({}, {"seed=0"});
  const RunDir a(ws.runs(), cfg), b(twin, cfg);
  std::vector<std::string> files = {"sr_x2.ckpt", "sr_x4.ckpt", "metrics.csv"};
  for (int d : cfg.stage_depths()) {
    files.push_back(stage_file(d));
    char loss[32];
    std::snprintf(loss, sizeof loss, "loss_%02d.csv", d + 1);
    files.push_back(loss);
  }
  std::size_t same = 0;
  for (const auto& f : files) {
    const bool eq = slurp(a.file(f)) == slurp(b.file(f));
    same += eq;
    if (!eq) o.note("differs: " + f);
  }
  o.require(same == files.size(), std::to_string(same) + " of " + std::to_string(files.size()) +
                                      " checkpoints and CSVs bitwise identical across two runs");
  return o;
}

Outcome frozen_prior(const Workspace& ws) {
  Outcome o;
  const TrainConfig cfg = load_config({}, {"seed=0"});
  const RunDir run(ws.runs(), cfg);
  // trunks as pretrained, before any bit-depth step
  const auto x2 = nets::load_trunk(run.file("sr_x2.ckpt"));
  const auto x4 = nets::load_trunk(run.file("sr_x4.ckpt"));
  bool same = true;
  for (int d : cfg.stage_depths()) {
    const auto stage = nets::load_submodel(run.file(stage_file(d)));
    same &= stage.sr2->checksum() == x2.checksum() && stage.sr4->checksum() == x4.checksum();
  }
  o.require(same, "every stage checkpoint carries the pretrained trunks unchanged (x2 " +
                      std::to_string(x2.checksum()) + ")");

  // and live: checksums around a short training run on the same trunks
  TrainConfig quick = cfg;
  quick.epochs_total = 2;
  quick.epochs_sgd = 1;
  quick.patches_per_epoch = 8;
  train::Trunks trunks{std::make_shared<const nets::SrTrunk>(x2),
                       std::make_shared<const nets::SrTrunk>(x4)};
  const auto before = train::trunk_checksum(trunks);
  const auto images = data::split_heldout(train::bit_depth_images(quick), quick.heldout_fraction).train;
  const auto r = train::train_stage(quick, 4, trunks, images);
  o.require(r.trunk_checksum_before == before && r.trunk_checksum_after == before &&
                train::trunk_checksum(trunks) == before,
            "trunk checksum unchanged across " + std::to_string(quick.epochs_total) +
                " epochs of stage training");
  return o;
}

// -- 10 -------------------------------------------------------------------------

Outcome metric_fixtures() {
  Outcome o;
  Rng rng(4);
  const PlanarImage img = data::uniform_random_image(32, 24, 8, rng);
  o.require(metrics::ssim(img, img) == 1.0, "identical images: SSIM " +
                                               fmt("%.17g", metrics::ssim(img, img)));
  const double inf = metrics::psnr(img, img);
  o.require(std::isinf(inf) && inf > 0, "identical images: PSNR +inf");

  const PlanarImage a(16, 16, 8, std::vector<std::uint16_t>(3 * 256, 100));
  const PlanarImage b(16, 16, 8, std::vector<std::uint16_t>(3 * 256, 116));
  const double p = metrics::psnr(a, b), want_p = oracle::psnr_from_mse(255.0, 256.0);
  o.require(std::abs(p - 24.0486) <= 1e-3 && std::abs(p - want_p) < 1e-9,
            "offset-16 8-bit pair: " + fmt("%.6f", p) + " dB (oracle " + fmt("%.6f", want_p) + ")");

  const PlanarImage c(16, 16, 16, std::vector<std::uint16_t>(3 * 256, 32768));
  const PlanarImage d(16, 16, 16, std::vector<std::uint16_t>(3 * 256, 16384));
  const double s = metrics::ssim(c, d), want_s = oracle::constant_ssim(32768, 16384, 65535);
  o.require(std::abs(s - 0.8001) <= 1e-3 && std::abs(s - want_s) < 1e-9,
            "constant means 0.5 vs 0.25: SSIM " + fmt("%.6f", s) + " (oracle " +
                fmt("%.6f", want_s) + ")");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work", work, "scratch directory (wiped)");
  app.add_option("--only", only, "run just these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  Workspace ws{fs::absolute(work)};
  fs::remove_all(ws.root);
  fs::create_directories(ws.root);

  struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "bit-plane codec exactness", codec_exactness},
      {2, "classical baseline oracle", classical_baselines},
      {3, "differentiation soundness", differentiation},
      {4, "scalar optimizer oracles", optimizers},
      {5, "untrained-model anchor", untrained_anchor},
      {6, "end-to-end learning gate", [&] { return learning_gate(ws); }},
      {7, "ablation direction", [&] { return ablation(ws); }},
      {8, "determinism", [&] { return determinism(ws); }},
      {9, "frozen-prior contract", [&] { return frozen_prior(ws); }},
      {10, "SSIM/PSNR fixtures", metric_fixtures},
  };
  // 7 to 9 read the seed-0 run that 6 trains
  std::set<int> wanted(only.begin(), only.end());
  if (wanted.count(7) || wanted.count(8) || wanted.count(9)) wanted.insert(6);

  int failures = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, std::string("aborted: ") + e.what());
    }
    failures += !o.pass;
    std::printf("[%s] criterion %d: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.title,
                seconds_since(t0));
    for (const auto& n : o.notes) std::printf("      %s\n", n.c_str());
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
