#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "bitforge/dataset.hpp"
#include "bitforge/ops.hpp"
#include "bitforge/training.hpp"

namespace bitforge::train {
namespace {

using nets::Tensor;

std::string format(const char* fmt, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

std::vector<Tensor> handles(const nets::ParamList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.value);
  return out;
}

// Activations are a few MB each and die every step. glibc would hand each
// one back to the kernel and page-fault it in again on the next step.
void keep_freed_memory() {
#ifdef __GLIBC__
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
#endif
}

void zero_grads(std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

// One training image at stage depth b, with everything a patch draw needs
// precomputed on the full frame.
struct StageImage {
  std::size_t height = 0, width = 0;
  std::vector<double> input;     // 3 x H x W, quantized to b and scaled
  std::vector<double> features;  // 2C x H x W trunk output, empty without SR
  std::vector<double> target;    // 3 x H x W plane b+1
};

}  // namespace

std::uint64_t trunk_checksum(const Trunks& trunks) {
  std::uint64_t h = 0;
  for (const auto& t : {trunks.x2, trunks.x4}) {
    if (!t) continue;
    const std::uint64_t c = t->checksum();
    h = fnv1a64(std::span(reinterpret_cast<const unsigned char*>(&c), sizeof c),
                h == 0 ? 0xcbf29ce484222325ull : h);
  }
  return h;
}

nets::SrTrunk pretrain_trunk(const TrainConfig& cfg, nets::ScaleTag scale,
                             const std::vector<PlanarImage>& images,
                             std::vector<double>* epoch_loss, const LogFn& log) {
  keep_freed_memory();
  const auto s = static_cast<std::size_t>(scale);
  Rng init(derive_seed(cfg.seed, "sr-init", s));
  Rng draw(derive_seed(cfg.seed, "sr-patches", s));

  nets::SrTrunk trunk = nets::SrTrunk::make(
      {scale, cfg.arch.trunk_width, cfg.arch.sr_res_blocks, false}, init);
  nets::SrHead head = nets::SrHead::make(cfg.arch.trunk_width, s, init);
  nets::ParamList named;
  trunk.collect("trunk", named);
  head.collect("head", named);
  auto params = handles(named);

  struct Pair {
    std::size_t lh, lw;
    std::vector<double> hr, lr;
  };
  std::vector<Pair> pairs;
  for (const auto& img : images) {
    Pair p;
    p.hr = data::normalized_samples(img);
    p.lr = data::bicubic_downsample(p.hr, kChannels, img.height(), img.width(), s);
    p.lh = img.height() / s;
    p.lw = img.width() / s;
    pairs.push_back(std::move(p));
  }

  const std::size_t hp = cfg.sr_patch_size, lp = hp / s, batch = cfg.sr_batch_size;
  const std::size_t steps = (cfg.sr_patches_per_epoch + batch - 1) / batch;
  auto state = optim::OptimizerState::adam(cfg.sr_lr, 0.0);

  std::vector<double> lr_buf(batch * kChannels * lp * lp), hr_buf(batch * kChannels * hp * hp);
  for (std::size_t epoch = 0; epoch < cfg.sr_epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      for (std::size_t b = 0; b < batch; ++b) {
        const auto& p = pairs[draw.below(pairs.size())];
        const std::size_t ly = draw.below(p.lh - lp + 1), lx = draw.below(p.lw - lp + 1);
        data::crop_planes(p.lr.data(), kChannels, p.lh, p.lw, ly, lx, lp, lp,
                          &lr_buf[b * kChannels * lp * lp]);
        data::crop_planes(p.hr.data(), kChannels, p.lh * s, p.lw * s, ly * s, lx * s, hp, hp,
                          &hr_buf[b * kChannels * hp * hp]);
      }
      Tensor x({batch, kChannels, lp, lp}, lr_buf);
      Tensor y({batch, kChannels, hp, hp}, hr_buf);
      Tensor loss = ops::mean_abs_error(head(trunk(x)), y);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw DivergenceError(format("SR pretraining x%zu diverged at epoch %zu: loss=%g", s,
                                     epoch + 1, value));
      }
      loss.backward();
      optim::step(params, state);
      zero_grads(params);
      total += value;
    }
    const double mean = total / static_cast<double>(steps);
    if (epoch_loss) epoch_loss->push_back(mean);
    if (log) {
      log(format("pretrain-sr x%zu epoch %zu/%zu l1=%.6f", s, epoch + 1, cfg.sr_epochs, mean));
    }
  }
  trunk.set_frozen(true);
  return trunk;
}

PretrainResult pretrain_sr(const TrainConfig& cfg, const LogFn& log) {
  const auto images = data::synth_dataset(cfg.sr_dataset_spec());
  PretrainResult r;
  r.trunks.x2 = std::make_shared<const nets::SrTrunk>(
      pretrain_trunk(cfg, nets::ScaleTag::kX2, images, &r.loss_x2, log));
  r.trunks.x4 = std::make_shared<const nets::SrTrunk>(
      pretrain_trunk(cfg, nets::ScaleTag::kX4, images, &r.loss_x4, log));
  return r;
}

StageResult train_stage(const TrainConfig& cfg, int depth, const Trunks& trunks,
                        const std::vector<PlanarImage>& train_images, const LogFn& log) {
  if (train_images.empty()) throw std::invalid_argument("train_stage: no training images");
  if (depth < 1 || depth >= kMaxBitDepth) throw std::invalid_argument("train_stage: bad depth");
  keep_freed_memory();

  StageResult result;
  result.trunk_checksum_before = trunk_checksum(trunks);

  Rng init(derive_seed(cfg.seed, "stage-init", static_cast<std::uint64_t>(depth)));
  Rng draw(derive_seed(cfg.seed, "stage-patches", static_cast<std::uint64_t>(depth)));
  result.weights = nets::make_submodel(cfg.arch, depth, trunks.x2, trunks.x4, init);
  auto& w = result.weights;
  auto params = handles(w.learnable());

  const std::size_t feat_ch = cfg.arch.use_sr ? 2 * cfg.arch.trunk_width : 0;
  std::vector<StageImage> stage_images;
  for (const auto& gt : train_images) {
    if (gt.bit_depth() <= depth) {
      throw std::invalid_argument("train_stage: ground truth is not deeper than the stage");
    }
    const std::size_t P = cfg.patch_size;
    if (gt.width() < P || gt.height() < P) {
      throw std::invalid_argument("train_stage: image smaller than patch_size");
    }
    StageImage si;
    si.height = gt.height();
    si.width = gt.width();
    const PlanarImage low = quantize(gt, depth);
    const PlanarImage next = gt.bit_depth() == depth + 1 ? gt : quantize(gt, depth + 1);
    si.input = data::normalized_samples(low);
    const BitPlane plane = extract_bitplane(next, depth + 1);
    si.target.assign(plane.bits().begin(), plane.bits().end());
    if (feat_ch > 0) {
      const Tensor f = nets::trunk_features(w, nets::image_to_tensor(low));
      si.features.assign(f.data().begin(), f.data().end());
    }
    stage_images.push_back(std::move(si));
  }

  const std::size_t P = cfg.patch_size, B = cfg.batch_size;
  const std::size_t steps = (cfg.patches_per_epoch + B - 1) / B;
  std::vector<double> xb(B * kChannels * P * P), yb(xb.size()), fb(B * feat_ch * P * P);

  auto state = optim::OptimizerState::sgd(cfg.lr, cfg.momentum, cfg.weight_decay);
  state.decay_mode = cfg.decay_mode;
  for (std::size_t epoch = 0; epoch < cfg.epochs_total; ++epoch) {
    if (epoch == cfg.epochs_sgd) {
      state = optim::OptimizerState::adam(cfg.lr, cfg.weight_decay);
      state.decay_mode = cfg.decay_mode;
    }
    double total = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      for (std::size_t b = 0; b < B; ++b) {
        const auto& si = stage_images[draw.below(stage_images.size())];
        const std::size_t y0 = draw.below(si.height - P + 1), x0 = draw.below(si.width - P + 1);
        data::crop_planes(si.input.data(), kChannels, si.height, si.width, y0, x0, P, P,
                          &xb[b * kChannels * P * P]);
        data::crop_planes(si.target.data(), kChannels, si.height, si.width, y0, x0, P, P,
                          &yb[b * kChannels * P * P]);
        if (feat_ch > 0) {
          data::crop_planes(si.features.data(), feat_ch, si.height, si.width, y0, x0, P, P,
                            &fb[b * feat_ch * P * P]);
        }
      }
      Tensor x({B, kChannels, P, P}, xb);
      Tensor y({B, kChannels, P, P}, yb);
      Tensor features;
      if (feat_ch > 0) features = Tensor({B, feat_ch, P, P}, fb);
      Tensor loss = ops::bce_with_logits(nets::submodel_forward(w, x, features), y);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw DivergenceError(format("stage %d->%d diverged at epoch %zu: loss=%g", depth,
                                     depth + 1, epoch + 1, value));
      }
      loss.backward();
      optim::step(params, state);
      zero_grads(params);
      total += value;
    }
    const double mean = total / static_cast<double>(steps);
    result.log.push_back({epoch + 1, state.kind, mean});
    if (log) {
      log(format("stage %d->%d epoch %zu/%zu %s bce=%.6f", depth, depth + 1, epoch + 1,
                 cfg.epochs_total, std::string(optim::to_string(state.kind)).c_str(), mean));
    }
  }
  result.trunk_checksum_after = trunk_checksum(trunks);
  return result;
}

}  // namespace bitforge::train

namespace bitforge::train {

std::size_t thread_cap() {
  if (const char* env = std::getenv("BITFORGE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<StageResult> train_stages(const TrainConfig& cfg, const Trunks& trunks,
                                      const std::vector<PlanarImage>& train_images,
                                      const LogFn& log) {
  const auto depths = cfg.stage_depths();
  std::vector<StageResult> results(depths.size());
  std::vector<std::exception_ptr> errors(depths.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < depths.size(); i = next++) {
      try {
        results[i] = train_stage(cfg, depths[i], trunks, train_images, log);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min(thread_cap(), depths.size());
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

std::vector<PlanarImage> bit_depth_images(const TrainConfig& cfg) {
  if (!cfg.data_dir.empty()) return data::read_dataset(cfg.data_dir);
  return data::synth_dataset(cfg.dataset_spec());
}

}  // namespace bitforge::train
