#include "latentcpt/pca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "latentcpt/error.hpp"

namespace latentcpt {

SymmetricEigen jacobi_eigen(Eigen::MatrixXd a) {
  if (a.rows() != a.cols()) throw Error(ErrorKind::DimensionMismatch, "matrix must be square");
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

  constexpr int kMaxSweeps = 100;
  const double scale = std::max(a.norm(), 1e-300);
  double previous_off = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    // Stop at convergence or once rounding noise stops the off-diagonal mass shrinking.
    if (std::sqrt(off) <= 1e-15 * scale || off >= previous_off) break;
    previous_off = off;

    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // A <- J^T A J with J the (p, q) rotation; columns first, then rows.
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = order[static_cast<std::size_t>(i)];
    out.values(i) = a(src, src);
    out.vectors.col(i) = v.col(src);
  }
  return out;
}

PcaBasis pca_fit(const Eigen::MatrixXd& data, std::size_t k) {
  const auto n = static_cast<std::size_t>(data.rows());
  if (k == 0 || k > static_cast<std::size_t>(data.cols())) {
    throw Error(ErrorKind::InvalidInput, "component count must be in [1, dim]");
  }
  if (n < k + 1) {
    throw Error(ErrorKind::RankDeficient, "need at least k + 1 observations for k components");
  }
  PcaBasis basis;
  basis.mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.rowwise() - basis.mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

  const SymmetricEigen eig = jacobi_eigen(cov);
  const double total = std::max(eig.values.cwiseAbs().maxCoeff(), 0.0);
  const auto kk = static_cast<Eigen::Index>(k);
  if (!(eig.values(kk - 1) > 1e-12 * total) || total == 0.0) {
    throw Error(ErrorKind::RankDeficient,
                "data variance is degenerate beyond " + std::to_string(k - 1) + " components");
  }
  basis.components.resize(kk, data.cols());
  basis.variances = eig.values.head(kk);
  for (Eigen::Index i = 0; i < kk; ++i) {
    Eigen::VectorXd dir = eig.vectors.col(i).normalized();
    // Sign convention: the largest-magnitude entry is positive.
    Eigen::Index arg = 0;
    dir.cwiseAbs().maxCoeff(&arg);
    if (dir(arg) < 0.0) dir = -dir;
    basis.components.row(i) = dir.transpose();
  }
  return basis;
}

PcaBasis pca_fit(std::span<const ChannelArray> profiles, std::size_t k) {
  Eigen::MatrixXd data(static_cast<Eigen::Index>(profiles.size()),
                       static_cast<Eigen::Index>(kProfileBins));
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    for (std::size_t j = 0; j < kProfileBins; ++j) {
      data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = profiles[i][j];
    }
  }
  return pca_fit(data, k);
}

Eigen::VectorXd pca_encode(const PcaBasis& basis, std::span<const double> x) {
  if (static_cast<Eigen::Index>(x.size()) != basis.mean.size()) {
    throw Error(ErrorKind::LengthMismatch, "input length does not match the PCA basis");
  }
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  return basis.components * (v - basis.mean);
}

Eigen::VectorXd pca_decode(const PcaBasis& basis, const Eigen::VectorXd& scores) {
  if (scores.size() != basis.components.rows()) {
    throw Error(ErrorKind::LengthMismatch, "score count does not match the PCA basis");
  }
  return basis.mean + basis.components.transpose() * scores;
}

}  // namespace latentcpt
