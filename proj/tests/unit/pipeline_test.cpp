#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "bitforge/cascade.hpp"
#include "bitforge/config.hpp"
#include "bitforge/dataset.hpp"
#include "bitforge/metrics.hpp"
#include "bitforge/run_dir.hpp"
#include "bitforge/training.hpp"
#include "oracles.hpp"

using namespace bitforge;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "bitforge_unit_pipeline" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Small enough to train in seconds.
TrainConfig tiny_config() {
  TrainConfig c;
  c.synth_count = 6;
  c.synth_size = 24;
  c.patch_size = 16;
  c.batch_size = 2;
  c.epochs_total = 4;
  c.epochs_sgd = 1;
  c.patches_per_epoch = 4;
  c.arch.trunk_width = 8;
  c.arch.sr_res_blocks = 1;
  c.arch.fused_width = 8;
  c.arch.ira_blocks = 1;
  c.sr_count = 3;
  c.sr_patch_size = 16;
  c.sr_batch_size = 2;
  c.sr_epochs = 4;
  c.sr_patches_per_epoch = 4;
  c.heldout_fraction = 0.34;
  c.validate();
  return c;
}

}  // namespace

// -- dataset --------------------------------------------------------------------

TEST_CASE("synthetic datasets are reproducible and 16-bit") {
  data::SynthSpec spec;
  spec.count = 8;
  spec.size = 32;
  spec.seed = 5;
  const auto a = data::synth_dataset(spec), b = data::synth_dataset(spec);
  REQUIRE(a.size() == 8);
  CHECK(a == b);
  for (const auto& img : a) {
    CHECK(img.bit_depth() == 16);
    CHECK(img.width() == 32);
    CHECK_NOTHROW(img.validate());
  }
  spec.seed = 6;
  CHECK(data::synth_dataset(spec) != a);
  spec.generators.clear();
  CHECK_THROWS_AS(data::synth_dataset(spec), std::invalid_argument);
}

TEST_CASE("generators cycle through the dataset") {
  data::SynthSpec spec;
  spec.count = 5;
  spec.size = 16;
  spec.generators = {data::Generator::kLinearGradient, data::Generator::kShapes};
  const auto imgs = data::synth_dataset(spec);
  CHECK(imgs[2] == data::synth_image(data::Generator::kLinearGradient, 16,
                                     derive_seed(spec.seed, "synth", 2)));
  CHECK(imgs[3] == data::synth_image(data::Generator::kShapes, 16,
                                     derive_seed(spec.seed, "synth", 3)));
}

TEST_CASE("linear gradients span at least 2^14 levels") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PlanarImage img = data::synth_image(data::Generator::kLinearGradient, 64, seed);
    const auto [lo, hi] = std::minmax_element(img.samples().begin(), img.samples().end());
    CHECK(*hi - *lo >= 16384);
  }
}

TEST_CASE("smooth content has many more distinct levels than four bits") {
  for (auto g : {data::Generator::kRadialGradient, data::Generator::kSmoothNoise,
                 data::Generator::kShapes}) {
    const PlanarImage img = data::synth_image(g, 48, 3);
    std::set<std::uint16_t> levels(img.samples().begin(), img.samples().end());
    CHECK(levels.size() > 256);
  }
  CHECK(data::parse_generator("smooth_noise") == data::Generator::kSmoothNoise);
  CHECK_THROWS_AS(data::parse_generator("plaid"), std::invalid_argument);
}

TEST_CASE("held-out split takes the tail") {
  std::vector<PlanarImage> imgs;
  for (int i = 0; i < 40; ++i) imgs.emplace_back(1, 1, 8, std::vector<std::uint16_t>(3, i));
  const auto split = data::split_heldout(imgs, 0.1);
  REQUIRE(split.heldout.size() == 4);
  CHECK(split.train.size() == 36);
  CHECK(split.heldout.front().samples()[0] == 36);
  CHECK(data::split_heldout(imgs, 0.001).heldout.size() == 1);
}

TEST_CASE("dataset directories round-trip") {
  data::SynthSpec spec;
  spec.count = 3;
  spec.size = 12;
  const auto imgs = data::synth_dataset(spec);
  const auto dir = scratch_dir("dataset");
  data::write_dataset(dir, imgs);
  CHECK(std::filesystem::exists(dir / "img_0002.png"));
  CHECK(data::read_dataset(dir) == imgs);
}

TEST_CASE("bicubic downsampling") {
  const std::size_t h = 12, w = 32;
  std::vector<double> flat(3 * h * w, 0.3);
  for (std::size_t f : {2u, 4u}) {
    const auto small = data::bicubic_downsample(flat, 3, h, w, f);
    REQUIRE(small.size() == 3 * (h / f) * (w / f));
    for (double v : small) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));
  }
  // cubic convolution reproduces a ramp away from the clamped borders
  std::vector<double> ramp(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) ramp[y * w + x] = static_cast<double>(x);
  }
  const auto half = data::bicubic_downsample(ramp, 1, h, w, 2);
  for (std::size_t x = 1; x < w / 2; ++x) CHECK(half[x] > half[x - 1]);
  for (std::size_t x = 3; x + 3 < w / 2; ++x) {
    CHECK(half[x] == doctest::Approx(2.0 * x + 0.5).epsilon(1e-9));
  }
}

// -- config ---------------------------------------------------------------------

TEST_CASE("empty config gives the defaults") {
  const TrainConfig c = parse_config_text("");
  CHECK(c == TrainConfig{});
  CHECK(c.patch_size == 64);
  CHECK(c.batch_size == 8);
  CHECK(c.epochs_total == 40);
  CHECK(c.epochs_sgd == 10);
  CHECK(c.lr == 1e-3);
  CHECK(c.momentum == 0.9);
  CHECK(c.weight_decay == 1e-4);
  CHECK(c.arch.trunk_width == 16);
  CHECK(c.arch.fused_width == 32);
  CHECK(c.arch.ira_blocks == 4);
  CHECK(c.arch.ira_expansion == 2);
  CHECK(c.stage_depths() == std::vector<int>{4, 5, 6, 7});
}

TEST_CASE("config text: sections, comments, precedence") {
  const auto dir = scratch_dir("config");
  const auto path = dir / "exp.cfg";
  std::ofstream(path) << "# experiment\n[schedule]\nepochs_total = 12\nepochs_sgd=3\n"
                         "[arch]\nira_blocks = 16  # deep head\nuse_sr=false\n";
  const TrainConfig c = load_config(path, {"epochs_sgd=2", "seed=9"});
  CHECK(c.epochs_total == 12);
  CHECK(c.epochs_sgd == 2);
  CHECK(c.seed == 9);
  CHECK(c.arch.ira_blocks == 16);
  CHECK_FALSE(c.arch.use_sr);
}

TEST_CASE("a new epoch budget keeps the one-to-three split") {
  const TrainConfig c = load_config({}, {"epochs_total=200"});
  CHECK(c.epochs_total == 200);
  CHECK(c.epochs_sgd == 50);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(load_config({}, {"depth_in=8", "depth_out=4"}), ConfigError);
  CHECK_THROWS_AS(load_config({}, {"epochs_sgd=40"}), ConfigError);
  CHECK_THROWS_AS(load_config({}, {"bogus=1"}), ConfigError);
  CHECK_THROWS_AS(load_config({}, {"lr=fast"}), ConfigError);
  CHECK_THROWS_AS(load_config({}, {"batch_size=-3"}), ConfigError);
  CHECK_THROWS_AS(load_config({}, {"decay_mode=cosine"}), ConfigError);
  CHECK_THROWS_AS(load_config({}, {"noequals"}), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/x.cfg", {}), ConfigError);
  try {
    parse_config_text("seed=1\n\nmystery=2\n");
    FAIL("accepted an unknown key");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).starts_with("line 3:"));
  }
}

TEST_CASE("canonical text reparses to the same config and hash") {
  TrainConfig c;
  c.seed = 3;
  c.lr = 0.000123456789;
  c.decay_mode = optim::DecayMode::kLrTime;
  c.generators = {data::Generator::kShapes, data::Generator::kUniformNoise};
  const TrainConfig back = parse_config_text(c.to_text());
  CHECK(back == c);
  CHECK(back.hash() == c.hash());
  TrainConfig d = c;
  d.seed = 4;
  CHECK(d.hash() != c.hash());
}

// -- cascade --------------------------------------------------------------------

TEST_CASE("oracle planes rebuild the ground truth at every depth") {
  Rng rng(1);
  const PlanarImage gt = data::uniform_random_image(9, 8, 12, rng);
  PlanarImage cur = quantize(gt, 3);
  const PlanarImage out = cascade::run(cur, 12, [&](const PlanarImage& img) {
    const int b = img.bit_depth();
    REQUIRE(img == quantize(gt, b));
    const PlanarImage next = b + 1 == 12 ? gt : quantize(gt, b + 1);
    return extract_bitplane(next, b + 1);
  });
  CHECK(out == gt);
}

TEST_CASE("all-zero planes reproduce zero padding") {
  Rng rng(2);
  const PlanarImage low = data::uniform_random_image(7, 5, 4, rng);
  const PlanarImage out = cascade::run(low, 8, [](const PlanarImage& img) {
    return BitPlane(img.width(), img.height());
  });
  CHECK(out == zero_pad_expand(low, 8));
}

TEST_CASE("untrained stages predict a constant plane") {
  Rng rng(3);
  TrainConfig cfg = tiny_config();
  cfg.arch.use_sr = false;
  std::vector<nets::SubmodelWeights> stages;
  for (int d : {4, 5}) {
    stages.push_back(nets::make_submodel(cfg.arch, d, nullptr, nullptr, rng));
    nets::zero_learnable(stages.back());
  }
  const PlanarImage low = data::uniform_random_image(12, 11, 4, rng);
  const BitPlane p = cascade::predict_plane(low, stages[0]);
  CHECK(p.width() == 12);
  CHECK(std::all_of(p.bits().begin(), p.bits().end(), [](auto b) { return b == 0; }));
  CHECK(cascade::cascade_infer(low, stages, 6) == zero_pad_expand(low, 6));
  CHECK_THROWS_AS(cascade::cascade_infer(low, stages, 7), std::invalid_argument);
  CHECK_THROWS_AS(cascade::cascade_infer(quantize(low, 3), stages, 5), std::invalid_argument);
}

TEST_CASE("plane accuracy") {
  const BitPlane a(2, 1, {1, 0, 1, 1, 0, 0}), b(2, 1, {1, 1, 1, 0, 0, 0});
  CHECK(cascade::plane_accuracy(a, b) == doctest::Approx(4.0 / 6.0));
  CHECK(cascade::plane_accuracy(a, a) == 1.0);
}

TEST_CASE("classical evaluation rows") {
  Rng rng(4);
  std::vector<PlanarImage> gt;
  for (int i = 0; i < 10; ++i) gt.push_back(data::uniform_random_image(256, 256, 16, rng));
  const auto zero = cascade::evaluate(gt, cascade::Method::kZeroPad, 4, 8);
  REQUIRE(zero.size() == 11);
  CHECK(zero.front().method == "zero_pad#0");
  CHECK(zero.back().method == "zero_pad");
  CHECK(zero.back().depth_in == 4);
  CHECK(zero.back().depth_out == 8);
  CHECK(std::abs(zero.back().psnr - oracle::zero_pad_psnr_4_to_8()) < 0.1);
  const auto gain = cascade::evaluate(gt, cascade::Method::kGain, 4, 8);
  const auto rep = cascade::evaluate(gt, cascade::Method::kReplicate, 4, 8);
  CHECK(gain.back().psnr > zero.back().psnr);
  CHECK(gain.back().psnr == rep.back().psnr);
  CHECK_THROWS(cascade::evaluate(gt, cascade::Method::kCascade, 4, 8));
}

// -- training -------------------------------------------------------------------

TEST_CASE("BITFORGE_THREADS caps stage parallelism") {
  setenv("BITFORGE_THREADS", "3", 1);
  CHECK(train::thread_cap() == 3);
  setenv("BITFORGE_THREADS", "zero", 1);
  CHECK(train::thread_cap() >= 1);
  unsetenv("BITFORGE_THREADS");
}

TEST_CASE("SR pretraining lowers its loss and freezes distinct trunks") {
  const TrainConfig cfg = tiny_config();
  const auto r = train::pretrain_sr(cfg);
  REQUIRE(r.loss_x2.size() == cfg.sr_epochs);
  CHECK(r.loss_x2.back() < r.loss_x2.front());
  CHECK(r.loss_x4.back() < r.loss_x4.front());
  CHECK(r.trunks.x2->spec.frozen);
  CHECK(r.trunks.x4->spec.frozen);
  CHECK(r.trunks.x2->checksum() != r.trunks.x4->checksum());
  nets::ParamList a, b;
  r.trunks.x2->collect("t", a);
  r.trunks.x4->collect("t", b);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].value.shape() == b[i].value.shape());
}

TEST_CASE("stage training: schedule, determinism, frozen trunks") {
  const TrainConfig cfg = tiny_config();
  const auto pre = train::pretrain_sr(cfg);
  const auto images = data::split_heldout(train::bit_depth_images(cfg), cfg.heldout_fraction).train;
  const auto before = train::trunk_checksum(pre.trunks);
  const auto a = train::train_stage(cfg, 4, pre.trunks, images);
  const auto b = train::train_stage(cfg, 4, pre.trunks, images);
  REQUIRE(a.log.size() == cfg.epochs_total);
  int switches = 0;
  for (std::size_t e = 0; e < a.log.size(); ++e) {
    CHECK(a.log[e].epoch == e + 1);
    CHECK(a.log[e].optimizer == (e < cfg.epochs_sgd ? optim::Kind::kSgdMomentum : optim::Kind::kAdam));
    if (e > 0 && a.log[e].optimizer != a.log[e - 1].optimizer) ++switches;
    CHECK(a.log[e].loss == b.log[e].loss);
  }
  CHECK(switches == 1);
  const auto wa = a.weights.learnable(), wb = b.weights.learnable();
  for (std::size_t i = 0; i < wa.size(); ++i) {
    CHECK(std::equal(wa[i].value.data().begin(), wa[i].value.data().end(),
                     wb[i].value.data().begin()));
  }
  CHECK(a.trunk_checksum_before == before);
  CHECK(a.trunk_checksum_after == before);
  CHECK(train::trunk_checksum(pre.trunks) == before);
}

TEST_CASE("a trained stage beats the uninformative predictor") {
  TrainConfig cfg = tiny_config();
  cfg.arch.use_sr = false;
  cfg.synth_size = 32;
  cfg.patch_size = 32;
  cfg.generators = {data::Generator::kLinearGradient};
  cfg.epochs_total = 24;
  cfg.epochs_sgd = 6;
  const auto images = train::bit_depth_images(cfg);
  const auto r = train::train_stage(cfg, 2, {}, images);
  CHECK(r.log.back().loss < std::log(2.0));
}

TEST_CASE("parallel stage training equals sequential training") {
  TrainConfig cfg = tiny_config();
  cfg.arch.use_sr = false;
  cfg.depth_in = 3;
  cfg.depth_out = 6;
  const auto images = train::bit_depth_images(cfg);
  setenv("BITFORGE_THREADS", "1", 1);
  const auto seq = train::train_stages(cfg, {}, images);
  setenv("BITFORGE_THREADS", "3", 1);
  const auto par = train::train_stages(cfg, {}, images);
  unsetenv("BITFORGE_THREADS");
  REQUIRE(seq.size() == 3);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(seq[s].weights.input_depth == 3 + static_cast<int>(s));
    for (std::size_t e = 0; e < cfg.epochs_total; ++e) CHECK(seq[s].log[e].loss == par[s].log[e].loss);
  }
}

TEST_CASE("stage training rejects bad input") {
  const TrainConfig cfg = tiny_config();
  CHECK_THROWS_AS(train::train_stage(cfg, 4, {}, {}), std::invalid_argument);
  Rng rng(1);
  std::vector<PlanarImage> shallow = {data::uniform_random_image(24, 24, 4, rng)};
  TrainConfig no_sr = cfg;
  no_sr.arch.use_sr = false;
  CHECK_THROWS_AS(train::train_stage(no_sr, 4, {}, shallow), std::invalid_argument);
}

// -- run directories ------------------------------------------------------------

TEST_CASE("run directory manifest is a loadable config with checksums") {
  const auto out = scratch_dir("runs");
  TrainConfig cfg = tiny_config();
  cfg.seed = 7;
  RunDir run(out, cfg);
  CHECK(run.path().filename().string().starts_with("run-"));
  CHECK(run.path().filename().string().ends_with("-s7"));
  run.write_manifest();
  std::ofstream(run.file("note.txt")) << "hello";
  run.record("note.txt");
  CHECK(load_config(run.file("manifest.txt"), {}) == cfg);

  std::ifstream m(run.file("manifest.txt"));
  std::string text((std::istreambuf_iterator<char>(m)), {});
  CHECK(text.find("# artifact note.txt ") != std::string::npos);

  // a second handle on the same run keeps earlier records
  RunDir again(out, cfg);
  again.write_manifest();
  std::ifstream m2(run.file("manifest.txt"));
  std::string text2((std::istreambuf_iterator<char>(m2)), {});
  CHECK(text2 == text);
  CHECK(stage_file(4) == "stage_05.ckpt");
}
