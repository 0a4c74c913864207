#include "bitforge/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace bitforge::gradcheck {

Report grad_check(const Builder& f, std::span<const tensor::Tensor> inputs,
                  const Options& options) {
  std::vector<tensor::Tensor> args(inputs.begin(), inputs.end());
  for (auto& t : args) t.zero_grad();

  std::uint64_t base_signature = 0;
  tensor::Tensor out;
  {
    tensor::BranchTrace trace;
    out = f(args);
    base_signature = trace.signature();
  }
  if (out.numel() != 1) {
    throw std::invalid_argument("grad_check: builder must return a scalar, got shape " +
                                tensor::to_string(out.shape()));
  }
  out.backward();
  const double floor = options.floor * std::max(1.0, std::abs(out.item()));
  auto evaluate = [&](std::uint64_t& signature) {
    tensor::BranchTrace trace;
    const double v = f(args).item();
    signature = trace.signature();
    return v;
  };

  std::mt19937_64 rng(options.seed);
  Report report;
  for (std::size_t k = 0; k < args.size(); ++k) {
    auto& t = args[k];
    if (!t.requires_grad()) continue;
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    std::vector<std::size_t> probe(t.numel());
    std::iota(probe.begin(), probe.end(), std::size_t{0});
    if (options.max_per_input != 0 && probe.size() > options.max_per_input) {
      std::shuffle(probe.begin(), probe.end(), rng);
      probe.resize(options.max_per_input);
      std::sort(probe.begin(), probe.end());
    }

    auto data = t.mutable_data();
    for (std::size_t idx : probe) {
      const double saved = data[idx];
      std::uint64_t sp = 0, sm = 0;
      data[idx] = saved + options.step;
      const double fp = evaluate(sp);
      data[idx] = saved - options.step;
      const double fm = evaluate(sm);
      data[idx] = saved;
      if (sp != base_signature || sm != base_signature) {
        ++report.straddled;
        continue;
      }

      const double numeric = (fp - fm) / (2.0 * options.step);
      const double abs_err = std::abs(analytic[idx] - numeric);
      const double denom = std::max({std::abs(analytic[idx]), std::abs(numeric), floor});
      const double rel = abs_err / denom;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error || report.checked == 0) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        std::ostringstream s;
        s << "input[" << k << "] index " << idx << ": analytic " << analytic[idx]
          << " vs numeric " << numeric;
        report.worst = s.str();
      }
      ++report.checked;
    }
  }
  report.passed = report.checked > 0 && report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace bitforge::gradcheck
