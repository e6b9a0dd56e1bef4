#include "cap/objective.h"

#include <cmath>
#include <string>

#include "cap/errors.h"
#include "cap/parallel.h"

namespace cap {

double guarded_cosine(const Vector& a, const Vector& b) {
  const double na = std::max(a.norm(), kNormFloor);
  const double nb = std::max(b.norm(), kNormFloor);
  return a.dot(b) / (na * nb);
}

double similarity_loss(std::span<const ForwardOutput> outputs, std::vector<std::size_t>* degenerate) {
  if (outputs.empty()) throw DataError("similarity_loss: empty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& o = outputs[i];
    if (degenerate && (o.z_hat.norm() < kNormFloor || o.z_normal.norm() < kNormFloor)) degenerate->push_back(i);
    sum += 1.0 - guarded_cosine(o.z_hat, o.z_normal);
  }
  return sum / static_cast<double>(outputs.size());
}

double constraint_term(std::span<const Vector> z_batch, std::span<const Vector> z_hat_batch,
                       bool scale_euclidean_by_dim) {
  if (z_batch.empty() || z_batch.size() != z_hat_batch.size()) {
    throw DataError("constraint_term: batch sizes must be equal and non-zero");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < z_batch.size(); ++i) {
    const Vector& z = z_batch[i];
    const Vector& zh = z_hat_batch[i];
    if (!(z.norm() > kNormFloor)) throw DataError("constraint_term: zero-norm pretrained feature at " + std::to_string(i));
    double sq = (z - zh).squaredNorm();
    if (scale_euclidean_by_dim) sq /= static_cast<double>(z.size());
    sum += 1.0 - guarded_cosine(z, zh) + sq;
  }
  return sum / static_cast<double>(z_batch.size());
}

LossBreakdown total_loss(double l_s, double omega, double lambda) {
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  return {l_s, omega, lambda, l_s + lambda * omega};
}

LossBreakdown evaluate_loss(const ModelParams& model, std::span<const TrainingSample> batch,
                            const ObjectiveOptions& options) {
  if (batch.empty()) throw DataError("evaluate_loss: empty batch");
  std::vector<ForwardOutput> outs;
  std::vector<Vector> zs;
  std::vector<Vector> zhs;
  outs.reserve(batch.size());
  for (const auto& s : batch) {
    outs.push_back(forward(model, s.z, s.neighbors));
    zs.push_back(outs.back().z);
    zhs.push_back(outs.back().z_hat);
  }
  return total_loss(similarity_loss(outs), constraint_term(zs, zhs, options.scale_euclidean_by_dim), options.lambda);
}

namespace {

// d cos(a, b) / da and d cos(a, b) / db under the clamped-norm definition.
struct CosineGrad {
  double value;
  Vector da;
  Vector db;
};

CosineGrad cosine_with_grad(const Vector& a, const Vector& b) {
  const double ra = a.norm();
  const double rb = b.norm();
  const double na = std::max(ra, kNormFloor);
  const double nb = std::max(rb, kNormFloor);
  const double c = a.dot(b) / (na * nb);
  CosineGrad g{c, b / (na * nb), a / (na * nb)};
  if (ra > kNormFloor) g.da -= c * a / (na * na);
  if (rb > kNormFloor) g.db -= c * b / (nb * nb);
  return g;
}

Matrix relu_mask(const Matrix& pre) { return (pre.array() > 0.0).cast<double>().matrix(); }

struct SampleResult {
  double l_s = 0.0;
  double omega = 0.0;
  std::vector<Matrix> grads;
};

// Forward with cached intermediates followed by reverse accumulation for a
// single sample. `weight` is 1/B.
SampleResult sample_gradient(const ModelParams& model, const TrainingSample& s, const ObjectiveOptions& opt,
                             double weight) {
  const auto d = static_cast<Eigen::Index>(model.dim);
  const Eigen::Index k = s.neighbors.rows();
  if (s.z.size() != d || s.neighbors.cols() != d || k < 1) throw DataError("gradients: sample dimension mismatch");
  const auto& hm = model.head.matrices;
  const Vector& z = s.z;
  const Matrix& m = s.neighbors;

  // Head forward.
  Vector pre_z, hid_z, z_hat;
  Matrix pre_m, hid_m, m_hat;
  switch (model.head.variant) {
    case HeadVariant::Linear:
      z_hat = hm[0] * z;
      m_hat = m * hm[0].transpose();
      break;
    case HeadVariant::LinearRelu:
      pre_z = hm[0] * z;
      pre_m = m * hm[0].transpose();
      z_hat = pre_z.cwiseMax(0.0);
      m_hat = pre_m.cwiseMax(0.0);
      break;
    case HeadVariant::LinearReluLinear:
      pre_z = hm[0] * z;
      pre_m = m * hm[0].transpose();
      hid_z = pre_z.cwiseMax(0.0);
      hid_m = pre_m.cwiseMax(0.0);
      z_hat = hm[1] * hid_z;
      m_hat = hid_m * hm[1].transpose();
      break;
  }

  // Normal representation forward.
  const double inv_k = 1.0 / static_cast<double>(k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix q, kk, a;
  Vector mix;
  if (model.attention) {
    q = m_hat * model.attention->w_q;
    kk = m_hat * model.attention->w_k;
    a = (q * kk.transpose()) * scale;
    for (Eigen::Index r = 0; r < k; ++r) {
      if (!a.row(r).allFinite()) throw NumericalError("gradients: non-finite attention logits in row " + std::to_string(r));
      const double mx = a.row(r).maxCoeff();
      a.row(r) = (a.row(r).array() - mx).exp().matrix();
      a.row(r) /= a.row(r).sum();
    }
    mix = ((a.colwise().sum().array() + 1.0) * inv_k).matrix().transpose();
  } else {
    mix = Vector::Constant(k, 2.0 * inv_k);
  }
  const Vector z_normal = m_hat.transpose() * mix;

  // Loss terms.
  const CosineGrad sim = cosine_with_grad(z_hat, z_normal);
  const CosineGrad align = cosine_with_grad(z, z_hat);
  const double euc_scale = opt.scale_euclidean_by_dim ? 1.0 / static_cast<double>(d) : 1.0;
  const Vector diff = z_hat - z;

  SampleResult out;
  out.l_s = 1.0 - sim.value;
  out.omega = 1.0 - align.value + euc_scale * diff.squaredNorm();

  // Reverse pass.
  const Vector g_zhat = weight * (-sim.da + opt.lambda * (-align.db + 2.0 * euc_scale * diff));
  const Vector g_zn = weight * (-sim.db);
  Matrix g_mhat = mix * g_zn.transpose();

  Matrix g_wq, g_wk;
  if (model.attention) {
    const Vector g_mix = m_hat * g_zn;
    // d mix_c / d A_rc = 1/K for every row r.
    const Eigen::RowVectorXd g_arow = g_mix.transpose() * inv_k;
    Matrix g_logits(k, k);
    for (Eigen::Index r = 0; r < k; ++r) {
      const double dotp = a.row(r).dot(g_arow);
      g_logits.row(r) = a.row(r).array() * (g_arow.array() - dotp);
    }
    g_logits *= scale;
    const Matrix g_q = g_logits * kk;
    const Matrix g_k = g_logits.transpose() * q;
    g_wq = m_hat.transpose() * g_q;
    g_wk = m_hat.transpose() * g_k;
    g_mhat += g_q * model.attention->w_q.transpose() + g_k * model.attention->w_k.transpose();
  }

  switch (model.head.variant) {
    case HeadVariant::Linear:
      out.grads.push_back(g_zhat * z.transpose() + g_mhat.transpose() * m);
      break;
    case HeadVariant::LinearRelu: {
      const Vector g_pz = g_zhat.cwiseProduct(relu_mask(pre_z));
      const Matrix g_pm = g_mhat.cwiseProduct(relu_mask(pre_m));
      out.grads.push_back(g_pz * z.transpose() + g_pm.transpose() * m);
      break;
    }
    case HeadVariant::LinearReluLinear: {
      const Matrix g_w2 = g_zhat * hid_z.transpose() + g_mhat.transpose() * hid_m;
      const Vector g_pz = (hm[1].transpose() * g_zhat).cwiseProduct(relu_mask(pre_z));
      const Matrix g_pm = (g_mhat * hm[1]).cwiseProduct(relu_mask(pre_m));
      out.grads.push_back(g_pz * z.transpose() + g_pm.transpose() * m);
      out.grads.push_back(g_w2);
      break;
    }
  }
  if (model.attention) {
    out.grads.push_back(std::move(g_wq));
    out.grads.push_back(std::move(g_wk));
  }
  return out;
}

}  // namespace

std::pair<LossBreakdown, GradientSet> gradients(const ModelParams& model,
                                                std::span<const TrainingSample* const> batch,
                                                const ObjectiveOptions& options, std::size_t workers) {
  if (batch.empty()) throw DataError("gradients: empty batch");
  if (options.lambda < 0.0) throw ConfigError("lambda must be non-negative");
  const double weight = 1.0 / static_cast<double>(batch.size());
  std::vector<SampleResult> results(batch.size());
  parallel_for(
      batch.size(), [&](std::size_t i) { results[i] = sample_gradient(model, *batch[i], options, weight); }, workers);

  const auto names = model.parameter_names();
  GradientSet grads;
  for (const Matrix* p : model.parameters()) grads.matrices.push_back(Matrix::Zero(p->rows(), p->cols()));
  double l_s = 0.0;
  double omega = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    for (std::size_t p = 0; p < grads.matrices.size(); ++p) {
      if (!results[i].grads[p].allFinite()) {
        throw NumericalError("gradients: non-finite gradient for " + names[p] + " at batch index " + std::to_string(i));
      }
      grads.matrices[p] += results[i].grads[p];
    }
    l_s += results[i].l_s;
    omega += results[i].omega;
  }
  return {total_loss(l_s * weight, omega * weight, options.lambda), std::move(grads)};
}

std::pair<LossBreakdown, GradientSet> gradients(const ModelParams& model, std::span<const TrainingSample> batch,
                                                const ObjectiveOptions& options, std::size_t workers) {
  std::vector<const TrainingSample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s);
  return gradients(model, std::span<const TrainingSample* const>(ptrs), options, workers);
}

GradientSet finite_difference_oracle(const ModelParams& model, std::span<const TrainingSample> batch,
                                     const ObjectiveOptions& options, double step) {
  if (!(step > 0.0)) throw ConfigError("finite difference step must be positive");
  ModelParams probe = model;
  GradientSet out;
  auto params = probe.parameters();
  for (Matrix* p : params) {
    Matrix g(p->rows(), p->cols());
    for (Eigen::Index i = 0; i < p->size(); ++i) {
      const double orig = p->data()[i];
      p->data()[i] = orig + step;
      const double up = evaluate_loss(probe, batch, options).total;
      p->data()[i] = orig - step;
      const double down = evaluate_loss(probe, batch, options).total;
      p->data()[i] = orig;
      g.data()[i] = (up - down) / (2.0 * step);
    }
    out.matrices.push_back(std::move(g));
  }
  return out;
}

}  // namespace cap
