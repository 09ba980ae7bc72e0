#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "geosweep/common.hpp"
#include "geosweep/costvol.hpp"
#include "geosweep/hypotheses.hpp"
#include "geosweep/tensor.hpp"
#include "geosweep/types.hpp"

namespace geosweep {

/// Per-pixel distribution over depth hypotheses plus its max as a
/// confidence map.
struct ProbabilityVolume {
  Array3D<double> values;      // (L, H, W)
  Array2D<double> confidence;  // (H, W)

  int num_samples() const { return values.dim0(); }
  int height() const { return values.dim1(); }
  int width() const { return values.dim2(); }
};

/// Channel-summed cost through a max-stabilized softmax along the
/// hypothesis axis.
inline ProbabilityVolume softmax_probability(const CostVolume& cost) {
  const int channels = cost.channels();
  const int num_samples = cost.num_samples();
  const int height = cost.height(), width = cost.width();

  ProbabilityVolume prob;
  prob.values = Array3D<double>(num_samples, height, width);
  prob.confidence = Array2D<double>(height, width);
  parallel_for(0, height, [&](int y) {
    std::vector<double> summed(num_samples);
    for (int x = 0; x < width; ++x) {
      double peak = -std::numeric_limits<double>::infinity();
      for (int l = 0; l < num_samples; ++l) {
        double s = 0.0;
        for (int m = 0; m < channels; ++m) s += cost.values(m, l, y, x);
        summed[l] = s;
        peak = std::max(peak, s);
      }
      double z = 0.0;
      for (int l = 0; l < num_samples; ++l) {
        summed[l] = std::exp(summed[l] - peak);
        z += summed[l];
      }
      double best = 0.0;
      for (int l = 0; l < num_samples; ++l) {
        const double p = summed[l] / z;
        prob.values(l, y, x) = p;
        best = std::max(best, p);
      }
      prob.confidence(y, x) = best;
    }
  });
  return prob;
}

/// Depth at the argmax probability; ties go to the smaller index. The
/// optional parabola refinement fits the three probabilities around an
/// interior argmax and shifts the depth inside the bracketing interval.
inline DepthMap winner_takes_all(const ProbabilityVolume& prob,
                                 const HypothesisVolume& hyps,
                                 bool parabola_refine = false) {
  if (prob.num_samples() != hyps.num_samples() || prob.height() != hyps.height() ||
      prob.width() != hyps.width())
    throw ConfigError("winner_takes_all: probability/hypothesis shape mismatch");
  const int num_samples = prob.num_samples();
  DepthMap out(prob.height(), prob.width());
  for (int y = 0; y < prob.height(); ++y)
    for (int x = 0; x < prob.width(); ++x) {
      int best = 0;
      for (int l = 1; l < num_samples; ++l)
        if (prob.values(l, y, x) > prob.values(best, y, x)) best = l;
      double depth = hyps.samples(best, y, x);
      if (parabola_refine && best > 0 && best + 1 < num_samples) {
        const double pl = prob.values(best - 1, y, x);
        const double pc = prob.values(best, y, x);
        const double pr = prob.values(best + 1, y, x);
        const double denom = pl - 2.0 * pc + pr;
        if (denom < 0.0) {
          const double delta = std::clamp(0.5 * (pl - pr) / denom, -0.5, 0.5);
          const double step = delta > 0.0
                                  ? hyps.samples(best + 1, y, x) - hyps.samples(best, y, x)
                                  : hyps.samples(best, y, x) - hyps.samples(best - 1, y, x);
          depth += delta * step;
        }
      }
      out.set(y, x, depth);
    }
  return out;
}

/// Mean negative log-probability of the hypothesis bin nearest the GT
/// depth. Pixels with invalid GT or GT outside the pixel's ladder are
/// masked; the log is floored at 1e-12.
inline double cross_entropy(const ProbabilityVolume& prob, const DepthMap& gt,
                            const HypothesisVolume& hyps) {
  if (prob.num_samples() != hyps.num_samples() || prob.height() != hyps.height() ||
      prob.width() != hyps.width())
    throw ConfigError("cross_entropy: probability/hypothesis shape mismatch");
  if (gt.height() != prob.height() || gt.width() != prob.width())
    throw ConfigError("cross_entropy: GT shape mismatch");

  const int num_samples = prob.num_samples();
  double total = 0.0;
  long unmasked = 0;
  for (int y = 0; y < prob.height(); ++y)
    for (int x = 0; x < prob.width(); ++x) {
      if (!gt.is_valid(y, x)) continue;
      const double d = gt.values(y, x);
      if (d < hyps.samples(0, y, x) || d > hyps.samples(num_samples - 1, y, x))
        continue;
      int bin = 0;
      double best = std::abs(d - hyps.samples(0, y, x));
      for (int l = 1; l < num_samples; ++l) {
        const double err = std::abs(d - hyps.samples(l, y, x));
        if (err < best) {
          best = err;
          bin = l;
        }
      }
      total += -std::log(std::max(prob.values(bin, y, x), 1e-12));
      ++unmasked;
    }
  if (unmasked == 0)
    throw DataError("cross_entropy: every pixel masked (GT out of range or invalid)");
  return total / static_cast<double>(unmasked);
}

struct DepthMetrics {
  double mae = 0.0;
  std::vector<double> thresholds;
  std::vector<double> within;  // fraction of jointly valid pixels per threshold
  double valid_fraction = 0.0;
  long jointly_valid = 0;
};

inline DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt,
                                  const std::vector<double>& thresholds) {
  if (pred.height() != gt.height() || pred.width() != gt.width())
    throw ConfigError("depth_metrics: size mismatch");
  DepthMetrics m;
  m.thresholds = thresholds;
  m.within.assign(thresholds.size(), 0.0);
  double abs_sum = 0.0;
  for (int y = 0; y < pred.height(); ++y)
    for (int x = 0; x < pred.width(); ++x) {
      if (!pred.is_valid(y, x) || !gt.is_valid(y, x)) continue;
      const double err = std::abs(pred.values(y, x) - gt.values(y, x));
      abs_sum += err;
      for (size_t t = 0; t < thresholds.size(); ++t)
        if (err <= thresholds[t]) m.within[t] += 1.0;
      ++m.jointly_valid;
    }
  if (m.jointly_valid == 0)
    throw DataError("depth_metrics: no jointly valid pixels");
  m.mae = abs_sum / static_cast<double>(m.jointly_valid);
  for (double& w : m.within) w /= static_cast<double>(m.jointly_valid);
  m.valid_fraction = static_cast<double>(m.jointly_valid) /
                     (static_cast<double>(pred.height()) * pred.width());
  return m;
}

}  // namespace geosweep
