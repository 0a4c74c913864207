#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "bitforge/nets.hpp"
#include "bitforge/ops.hpp"

namespace bitforge::nets {
namespace {

using KeyValues = std::map<std::string, std::string>;

std::filesystem::path manifest_path(const std::filesystem::path& p) {
  auto m = p;
  m += ".manifest";
  return m;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  KeyValues kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed manifest line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& require(const KeyValues& kv, const std::string& key,
                           const std::filesystem::path& path) {
  auto it = kv.find(key);
  if (it == kv.end()) throw std::runtime_error(path.string() + ": missing key " + key);
  return it->second;
}

std::size_t require_size(const KeyValues& kv, const std::string& key,
                         const std::filesystem::path& path) {
  return static_cast<std::size_t>(std::stoull(require(kv, key, path)));
}

// Copies checkpoint values into the tensors named in `params`.
void assign(const ParamList& params, const std::vector<checkpoint::NamedTensor>& stored,
            const std::filesystem::path& path) {
  std::map<std::string, const tensor::Tensor*> by_name;
  for (const auto& s : stored) by_name[s.name] = &s.value;
  for (const auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      throw std::runtime_error(path.string() + ": checkpoint lacks tensor " + p.name);
    }
    if (it->second->shape() != p.value.shape()) {
      throw std::runtime_error(path.string() + ": tensor " + p.name + " has shape " +
                               tensor::to_string(it->second->shape()) + ", expected " +
                               tensor::to_string(p.value.shape()));
    }
    auto dst = tensor::Tensor(p.value).mutable_data();
    auto src = it->second->data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  if (by_name.size() != params.size()) {
    throw std::runtime_error(path.string() + ": checkpoint has unexpected extra tensors");
  }
}

std::string scale_name(ScaleTag s) { return s == ScaleTag::kX4 ? "x4" : "x2"; }

ScaleTag parse_scale(const std::string& s) {
  if (s == "x2") return ScaleTag::kX2;
  if (s == "x4") return ScaleTag::kX4;
  throw std::runtime_error("unknown scale tag " + s);
}

}  // namespace

ParamList SubmodelWeights::learnable() const {
  ParamList out;
  inception.collect("inception", out);
  fusion.collect("fusion", out);
  cbam.collect("cbam", out);
  for (std::size_t i = 0; i < ira.size(); ++i) ira[i].collect("ira." + std::to_string(i), out);
  tail.collect("tail", out);
  irb.collect("irb", out);
  return out;
}

ParamList SubmodelWeights::all() const {
  ParamList out;
  if (sr2) sr2->collect("sr2", out);
  if (sr4) sr4->collect("sr4", out);
  auto rest = learnable();
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

SubmodelWeights make_submodel(const ArchConfig& arch, int input_depth,
                              std::shared_ptr<const SrTrunk> sr2,
                              std::shared_ptr<const SrTrunk> sr4, Rng& rng) {
  if (input_depth < 1 || input_depth >= kMaxBitDepth) {
    throw std::invalid_argument("make_submodel: input depth must be in [1, 15]");
  }
  if (arch.use_sr) {
    if (!sr2 || !sr4) throw std::invalid_argument("make_submodel: SR trunks required");
    for (const auto* t : {sr2.get(), sr4.get()}) {
      if (t->spec.trunk_width != arch.trunk_width ||
          t->spec.num_res_blocks != arch.sr_res_blocks) {
        throw std::invalid_argument("make_submodel: trunk geometry does not match architecture");
      }
    }
  }
  SubmodelWeights w;
  w.input_depth = input_depth;
  w.arch = arch;
  if (arch.use_sr) {
    w.sr2 = std::move(sr2);
    w.sr4 = std::move(sr4);
  }
  const std::size_t c = arch.trunk_width;
  const std::size_t f = arch.fused_width;
  w.inception = Inception::make(kChannels, c, rng);
  w.fusion = Conv2d::make(arch.use_sr ? 3 * c : c, f, 1, rng);
  w.cbam = Cbam::make(f, rng);
  for (std::size_t i = 0; i < arch.ira_blocks; ++i) {
    w.ira.push_back(IraBlock::make(f, arch.ira_expansion, rng));
  }
  w.tail = Cbam::make(f, rng);
  w.irb = IrbOut::make(f, arch.ira_expansion, kChannels, rng);
  return w;
}

void zero_learnable(SubmodelWeights& w) {
  for (auto& p : w.learnable()) {
    auto d = tensor::Tensor(p.value).mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  }
}

Tensor image_to_tensor(const PlanarImage& img) {
  return images_to_tensor({img});
}

Tensor images_to_tensor(const std::vector<PlanarImage>& imgs) {
  if (imgs.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  const auto& first = imgs.front();
  std::vector<double> data;
  data.reserve(imgs.size() * first.size());
  for (const auto& img : imgs) {
    if (img.width() != first.width() || img.height() != first.height() ||
        img.bit_depth() != first.bit_depth()) {
      throw std::invalid_argument("images_to_tensor: batch images differ in size or depth");
    }
    const double inv = 1.0 / static_cast<double>(img.max_value());
    for (auto v : img.samples()) data.push_back(static_cast<double>(v) * inv);
  }
  return Tensor({imgs.size(), kChannels, first.height(), first.width()}, std::move(data));
}

Tensor trunk_features(const SubmodelWeights& w, const Tensor& x) {
  if (!w.arch.use_sr) return {};
  return ops::concat({(*w.sr2)(x), (*w.sr4)(x)});
}

Tensor submodel_forward(const SubmodelWeights& w, const Tensor& x, const Tensor& features) {
  Tensor incep = w.inception(x);
  Tensor fused;
  if (w.arch.use_sr) {
    const Tensor trunks = features.defined() ? features : trunk_features(w, x);
    if (trunks.dim(0) != x.dim(0) || trunks.dim(2) != x.dim(2) || trunks.dim(3) != x.dim(3)) {
      throw std::invalid_argument("submodel_forward: trunk features do not match the input");
    }
    fused = w.fusion(ops::concat({trunks, incep}));
  } else {
    fused = w.fusion(incep);
  }
  Tensor h = w.cbam(fused);
  for (const auto& block : w.ira) h = block(h);
  h = w.tail(h);
  return w.irb(h);
}

Tensor submodel_forward(const PlanarImage& img, const SubmodelWeights& w) {
  if (img.bit_depth() != w.input_depth) {
    throw std::invalid_argument("submodel_forward: image depth " +
                                std::to_string(img.bit_depth()) + " but stage expects " +
                                std::to_string(w.input_depth));
  }
  return submodel_forward(w, image_to_tensor(img));
}

void save_submodel(const std::filesystem::path& path, const SubmodelWeights& w) {
  checkpoint::save(path, w.all());
  std::ofstream m(manifest_path(path));
  if (!m) throw std::runtime_error("cannot write " + manifest_path(path).string());
  m << "kind=submodel\n"
    << "input_depth=" << w.input_depth << "\n"
    << "trunk_width=" << w.arch.trunk_width << "\n"
    << "sr_res_blocks=" << w.arch.sr_res_blocks << "\n"
    << "fused_width=" << w.arch.fused_width << "\n"
    << "ira_blocks=" << w.arch.ira_blocks << "\n"
    << "ira_expansion=" << w.arch.ira_expansion << "\n"
    << "use_sr=" << (w.arch.use_sr ? 1 : 0) << "\n";
  if (w.arch.use_sr) {
    for (const auto& [name, t] : {std::pair{"sr2", w.sr2}, std::pair{"sr4", w.sr4}}) {
      m << name << ".scale=" << scale_name(t->spec.scale) << "\n"
        << name << ".frozen=" << (t->spec.frozen ? 1 : 0) << "\n"
        << name << ".checksum=" << std::hex << t->checksum() << std::dec << "\n";
    }
  }
  m << "blocks=" << (w.arch.use_sr ? "sr2,sr4," : "") << "inception,fusion,cbam";
  for (std::size_t i = 0; i < w.ira.size(); ++i) m << ",ira." << i;
  m << ",tail,irb\n";
}

SubmodelWeights load_submodel(const std::filesystem::path& path) {
  const auto mpath = manifest_path(path);
  const auto kv = read_key_values(mpath);
  if (require(kv, "kind", mpath) != "submodel") {
    throw std::runtime_error(mpath.string() + ": not a submodel manifest");
  }
  ArchConfig arch;
  arch.trunk_width = require_size(kv, "trunk_width", mpath);
  arch.sr_res_blocks = require_size(kv, "sr_res_blocks", mpath);
  arch.fused_width = require_size(kv, "fused_width", mpath);
  arch.ira_blocks = require_size(kv, "ira_blocks", mpath);
  arch.ira_expansion = require_size(kv, "ira_expansion", mpath);
  arch.use_sr = require(kv, "use_sr", mpath) == "1";
  const int depth = std::stoi(require(kv, "input_depth", mpath));

  Rng scratch(0);
  std::shared_ptr<SrTrunk> sr2, sr4;
  if (arch.use_sr) {
    SrEncoderSpec spec{ScaleTag::kX2, arch.trunk_width, arch.sr_res_blocks, true};
    spec.scale = parse_scale(require(kv, "sr2.scale", mpath));
    sr2 = std::make_shared<SrTrunk>(SrTrunk::make(spec, scratch));
    spec.scale = parse_scale(require(kv, "sr4.scale", mpath));
    sr4 = std::make_shared<SrTrunk>(SrTrunk::make(spec, scratch));
  }
  SubmodelWeights w = make_submodel(arch, depth, sr2, sr4, scratch);
  assign(w.all(), checkpoint::load(path), path);
  return w;
}

void save_trunk(const std::filesystem::path& path, const SrTrunk& trunk) {
  ParamList params;
  trunk.collect("trunk", params);
  checkpoint::save(path, params);
  std::ofstream m(manifest_path(path));
  if (!m) throw std::runtime_error("cannot write " + manifest_path(path).string());
  m << "kind=sr_trunk\n"
    << "scale=" << scale_name(trunk.spec.scale) << "\n"
    << "trunk_width=" << trunk.spec.trunk_width << "\n"
    << "num_res_blocks=" << trunk.spec.num_res_blocks << "\n"
    << "frozen=" << (trunk.spec.frozen ? 1 : 0) << "\n"
    << "checksum=" << std::hex << trunk.checksum() << std::dec << "\n";
}

SrTrunk load_trunk(const std::filesystem::path& path) {
  const auto mpath = manifest_path(path);
  const auto kv = read_key_values(mpath);
  if (require(kv, "kind", mpath) != "sr_trunk") {
    throw std::runtime_error(mpath.string() + ": not an SR trunk manifest");
  }
  SrEncoderSpec spec;
  spec.scale = parse_scale(require(kv, "scale", mpath));
  spec.trunk_width = require_size(kv, "trunk_width", mpath);
  spec.num_res_blocks = require_size(kv, "num_res_blocks", mpath);
  spec.frozen = false;
  Rng scratch(0);
  SrTrunk t = SrTrunk::make(spec, scratch);
  ParamList params;
  t.collect("trunk", params);
  assign(params, checkpoint::load(path), path);
  t.set_frozen(require(kv, "frozen", mpath) == "1");
  return t;
}

}  // namespace bitforge::nets
