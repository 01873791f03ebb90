#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "poseforge/dataset.hpp"

namespace poseforge::flow {

template <typename Scalar>
struct FlowField {
  Grid<Scalar> u;
  Grid<Scalar> v;

  Eigen::Index rows() const { return u.rows(); }
  Eigen::Index cols() const { return u.cols(); }
  Grid<Scalar> magnitude() const { return (u.array().square() + v.array().square()).sqrt().matrix(); }
};

inline constexpr double kRatioMax = 1e6;
inline constexpr double kBackgroundEpsilon = 1e-6;

struct FlowConfig {
  double alpha = 15.0;
  int iterations = 100;
  int threads = 1;
};

/// Horn-Schunck: gradients are central differences averaged over both frames (replicated
/// borders), I_t = f2 - f1, and each Jacobi sweep sets
///   u = ubar - I_x (I_x ubar + I_y vbar + I_t) / (alpha^2 + I_x^2 + I_y^2)
/// (v symmetric) where ubar is the classic 4-neighbour/diagonal weighted average.
/// Rows are split across `threads`; every pixel's update is independent within a sweep, so
/// the result does not depend on the split.
template <typename Scalar, typename Derived1, typename Derived2>
FlowField<Scalar> estimate_flow(const Eigen::MatrixBase<Derived1>& f1, const Eigen::MatrixBase<Derived2>& f2,
                                Scalar alpha, int n_iter, int threads = 1);

/// Mean flow magnitude over pixels whose centers fall inside `box`, divided by the mean over
/// the rest. Clamped to kRatioMax when the background mean is below kBackgroundEpsilon; both
/// means zero gives 0.
template <typename Scalar>
double fg_bg_ratio(const FlowField<Scalar>& flow, const BoundingBox& box);

struct MotionScore {
  std::string video_id;
  int frame_index = 0;
  double fg_bg_ratio = 0;
};

/// One score per frame that has a successor, from the flow between the frame and its successor.
std::vector<MotionScore> score_clip(const VideoClip& clip, const FlowConfig& cfg);
std::vector<MotionScore> score_dataset(const DatasetManifest& manifest, const FlowConfig& cfg);

/// Binary layout: 4-byte magic, u32 rows, u32 cols, rows*cols f32 `first` then `second`.
void write_grid_pair(const std::filesystem::path& path, const char (&magic)[5], const Grid<float>& first,
                     const Grid<float>& second);
void write_flow(const std::filesystem::path& path, const FlowField<float>& flow);
FlowField<float> read_flow(const std::filesystem::path& path);

void write_scores(const std::filesystem::path& path, const std::vector<MotionScore>& scores);
std::vector<MotionScore> read_scores(const std::filesystem::path& path);

// ---------------------------------------------------------------------------------------------

namespace detail {

template <typename Scalar>
Scalar at_clamped(const Grid<Scalar>& g, Eigen::Index y, Eigen::Index x) {
  y = std::clamp<Eigen::Index>(y, 0, g.rows() - 1);
  x = std::clamp<Eigen::Index>(x, 0, g.cols() - 1);
  return g(y, x);
}

void for_row_blocks(Eigen::Index rows, int threads, const std::function<void(Eigen::Index, Eigen::Index)>& fn);

}  // namespace detail

template <typename Scalar, typename Derived1, typename Derived2>
FlowField<Scalar> estimate_flow(const Eigen::MatrixBase<Derived1>& f1, const Eigen::MatrixBase<Derived2>& f2,
                                Scalar alpha, int n_iter, int threads) {
  if (f1.rows() != f2.rows() || f1.cols() != f2.cols()) {
    throw Error("estimate_flow: frame dimensions differ");
  }
  if (!(alpha > 0)) throw Error("estimate_flow: alpha must be positive");
  if (n_iter < 1) throw Error("estimate_flow: n_iter must be >= 1");
  const Eigen::Index rows = f1.rows();
  const Eigen::Index cols = f1.cols();
  const Grid<Scalar> a = f1.template cast<Scalar>();
  const Grid<Scalar> b = f2.template cast<Scalar>();

  Grid<Scalar> ix(rows, cols), iy(rows, cols), it(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y) {
    for (Eigen::Index x = 0; x < cols; ++x) {
      using detail::at_clamped;
      const Scalar dxa = (at_clamped(a, y, x + 1) - at_clamped(a, y, x - 1)) / Scalar(2);
      const Scalar dxb = (at_clamped(b, y, x + 1) - at_clamped(b, y, x - 1)) / Scalar(2);
      const Scalar dya = (at_clamped(a, y + 1, x) - at_clamped(a, y - 1, x)) / Scalar(2);
      const Scalar dyb = (at_clamped(b, y + 1, x) - at_clamped(b, y - 1, x)) / Scalar(2);
      ix(y, x) = (dxa + dxb) / Scalar(2);
      iy(y, x) = (dya + dyb) / Scalar(2);
      it(y, x) = b(y, x) - a(y, x);
    }
  }
  const Grid<Scalar> denom =
      (Scalar(alpha * alpha) + ix.array().square() + iy.array().square()).matrix();

  FlowField<Scalar> flow{Grid<Scalar>::Zero(rows, cols), Grid<Scalar>::Zero(rows, cols)};
  Grid<Scalar> next_u(rows, cols), next_v(rows, cols);
  for (int iter = 0; iter < n_iter; ++iter) {
    detail::for_row_blocks(rows, threads, [&](Eigen::Index y0, Eigen::Index y1) {
      for (Eigen::Index y = y0; y < y1; ++y) {
        const Eigen::Index ym = y > 0 ? y - 1 : 0;
        const Eigen::Index yp = y + 1 < rows ? y + 1 : rows - 1;
        for (Eigen::Index x = 0; x < cols; ++x) {
          const Eigen::Index xm = x > 0 ? x - 1 : 0;
          const Eigen::Index xp = x + 1 < cols ? x + 1 : cols - 1;
          auto average = [&](const Grid<Scalar>& g) {
            const Scalar edge = g(ym, x) + g(yp, x) + g(y, xm) + g(y, xp);
            const Scalar corner = g(ym, xm) + g(ym, xp) + g(yp, xm) + g(yp, xp);
            return edge / Scalar(6) + corner / Scalar(12);
          };
          const Scalar ubar = average(flow.u);
          const Scalar vbar = average(flow.v);
          const Scalar common = (ix(y, x) * ubar + iy(y, x) * vbar + it(y, x)) / denom(y, x);
          next_u(y, x) = ubar - ix(y, x) * common;
          next_v(y, x) = vbar - iy(y, x) * common;
        }
      }
    });
    flow.u.swap(next_u);
    flow.v.swap(next_v);
  }
  return flow;
}

template <typename Scalar>
double fg_bg_ratio(const FlowField<Scalar>& flow, const BoundingBox& box) {
  double fg_sum = 0, bg_sum = 0;
  long fg_n = 0, bg_n = 0;
  for (Eigen::Index y = 0; y < flow.rows(); ++y) {
    const double cy = static_cast<double>(y) + 0.5;
    for (Eigen::Index x = 0; x < flow.cols(); ++x) {
      const double cx = static_cast<double>(x) + 0.5;
      const double m = std::hypot(static_cast<double>(flow.u(y, x)), static_cast<double>(flow.v(y, x)));
      if (cx >= box.x_min && cx < box.x_max && cy >= box.y_min && cy < box.y_max) {
        fg_sum += m;
        ++fg_n;
      } else {
        bg_sum += m;
        ++bg_n;
      }
    }
  }
  if (bg_n == 0) throw Error("fg_bg_ratio: box covers the whole flow field (no background)");
  const double fg = fg_n > 0 ? fg_sum / fg_n : 0.0;
  const double bg = bg_sum / bg_n;
  if (fg == 0 && bg == 0) return 0.0;
  if (bg < kBackgroundEpsilon) return kRatioMax;
  return std::min(fg / bg, kRatioMax);
}

}  // namespace poseforge::flow
