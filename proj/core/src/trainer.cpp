#include "cap/trainer.h"

#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "cap/errors.h"
#include "cap/parallel.h"
#include "cap/scoring.h"

namespace cap {

TrainingConfig TrainingConfig::cifar() { return TrainingConfig{}; }

TrainingConfig TrainingConfig::mvtec() {
  TrainingConfig c;
  c.k = 4;
  c.lambda = 0.1;
  c.batch_size = 16;
  c.learning_rate = 1e-4;
  return c;
}

void TrainingConfig::validate() const {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be a finite non-negative value");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// splitmix64-seeded stream separate from the attention initialisation.
std::uint64_t shuffle_seed(std::uint64_t seed) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::string TrainingTrace::to_csv() const {
  std::ostringstream os;
  os << "epoch,l_s,omega,total,head_frobenius,holdout_normal_mean,holdout_anomaly_mean\n";
  for (const auto& r : epochs) {
    os << r.epoch << ',' << fmt(r.l_s) << ',' << fmt(r.omega) << ',' << fmt(r.total) << ','
       << fmt(r.head_frobenius) << ',' << fmt(r.holdout_normal_mean) << ',' << fmt(r.holdout_anomaly_mean) << '\n';
  }
  return os.str();
}

OptimizerState OptimizerState::zeros_like(const ModelParams& model) {
  OptimizerState s;
  for (const Matrix* p : model.parameters()) {
    s.first_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
    s.second_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  return s;
}

void adam_step(OptimizerState& state, ModelParams& model, const GradientSet& grads, const TrainingConfig& config) {
  auto params = model.parameters();
  if (params.size() != grads.matrices.size() || params.size() != state.first_moment.size()) {
    throw DataError("adam_step: parameter, gradient and state counts differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Matrix& g = grads.matrices[p];
    Matrix& m = state.first_moment[p];
    Matrix& v = state.second_moment[p];
    if (g.rows() != params[p]->rows() || g.cols() != params[p]->cols()) throw DataError("adam_step: shape mismatch");
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    const auto m_hat = m.array() / bc1;
    const auto v_hat = v.array() / bc2;
    params[p]->array() -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
  }
}

std::vector<NeighborSet> precompute_neighbors(const MemoryBank& bank, std::size_t k, std::size_t workers) {
  if (k < 1 || k + 1 > bank.size()) {
    throw ConfigError("k=" + std::to_string(k) + " needs a bank of at least k+1 rows (have " +
                      std::to_string(bank.size()) + ")");
  }
  std::vector<NeighborSet> table(bank.size());
  parallel_for(
      bank.size(), [&](std::size_t i) { table[i] = top_k_neighbors(bank, bank.row(i), k, i); }, workers);
  return table;
}

double head_frobenius(const ModelParams& model) {
  double sq = 0.0;
  for (const auto& m : model.head.matrices) sq += m.squaredNorm();
  return std::sqrt(sq);
}

namespace {

struct HoldoutMeans {
  double normal = std::numeric_limits<double>::quiet_NaN();
  double anomaly = std::numeric_limits<double>::quiet_NaN();
};

HoldoutMeans holdout_means(const ModelParams& model, const FeatureSet& holdout, const std::vector<NeighborSet>& nbrs,
                           std::size_t workers) {
  std::vector<double> scores(nbrs.size());
  parallel_for(
      nbrs.size(),
      [&](std::size_t i) { scores[i] = score_with_neighbors(model, holdout.features.row(i), nbrs[i].matrix).score; },
      workers);
  double sum_n = 0.0, sum_a = 0.0;
  std::size_t cnt_n = 0, cnt_a = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (holdout.labels && (*holdout.labels)[i]) {
      sum_a += scores[i];
      ++cnt_a;
    } else {
      sum_n += scores[i];
      ++cnt_n;
    }
  }
  HoldoutMeans out;
  if (cnt_n) out.normal = sum_n / static_cast<double>(cnt_n);
  if (cnt_a) out.anomaly = sum_a / static_cast<double>(cnt_a);
  return out;
}

}  // namespace

TrainResult train(const MemoryBank& bank, const TrainingConfig& config, const FeatureSet* holdout) {
  config.validate();
  if (bank.size() <= config.k) {
    throw ConfigError("bank of " + std::to_string(bank.size()) + " rows is too small for k=" + std::to_string(config.k));
  }
  TrainResult result{init_model(bank.dim(), config.head_variant, config.attention_enabled, config.seed), {}};
  ModelParams& model = result.model;

  const auto table = precompute_neighbors(bank, config.k, config.workers);
  std::vector<TrainingSample> samples(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) samples[i] = {bank.row(i), table[i].matrix};

  std::vector<NeighborSet> holdout_nbrs;
  if (holdout) {
    if (holdout->features.dim() != bank.dim()) throw DataError("holdout dimension does not match bank dimension");
    holdout_nbrs = query_neighbors(bank, holdout->features, config.k, config.workers);
  }

  const ObjectiveOptions objective{config.lambda, config.scale_euclidean_by_dim};
  OptimizerState state = OptimizerState::zeros_like(model);
  std::mt19937_64 rng(shuffle_seed(config.seed));
  std::vector<std::size_t> order(bank.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[static_cast<std::size_t>(rng() % (i + 1))]);
    }
    double sum_ls = 0.0, sum_omega = 0.0, sum_total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const TrainingSample*> batch;
      batch.reserve(end - start);
      for (std::size_t j = start; j < end; ++j) batch.push_back(&samples[order[j]]);

      std::pair<LossBreakdown, GradientSet> lg;
      try {
        lg = gradients(model, std::span<const TrainingSample* const>(batch), objective, config.workers);
      } catch (const NumericalError& e) {
        throw NumericalError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index) + ": " + e.what());
      }
      const auto& loss = lg.first;
      if (!std::isfinite(loss.total)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index));
      }
      const double w = static_cast<double>(batch.size());
      sum_ls += w * loss.l_s;
      sum_omega += w * loss.omega;
      sum_total += w * loss.total;
      adam_step(state, model, lg.second, config);
    }

    EpochRecord rec;
    const double n = static_cast<double>(order.size());
    rec.epoch = epoch;
    rec.l_s = sum_ls / n;
    rec.omega = sum_omega / n;
    rec.total = sum_total / n;
    rec.head_frobenius = head_frobenius(model);
    HoldoutMeans hm;
    if (holdout) hm = holdout_means(model, *holdout, holdout_nbrs, config.workers);
    rec.holdout_normal_mean = hm.normal;
    rec.holdout_anomaly_mean = hm.anomaly;
    result.trace.epochs.push_back(rec);
  }
  return result;
}

CollapseDiagnostics collapse_diagnostics(const ModelParams& model, const MemoryBank& bank, const FeatureSet* holdout,
                                         std::size_t k, std::size_t workers) {
  if (model.dim != bank.dim()) throw DataError("collapse_diagnostics: model and bank dimensions differ");
  CollapseDiagnostics d;
  d.head_frobenius = head_frobenius(model);
  std::size_t small = 0, total = 0;
  for (const auto& m : model.head.matrices) {
    small += static_cast<std::size_t>((m.array().abs() < 1e-4).count());
    total += static_cast<std::size_t>(m.size());
  }
  d.head_sparsity = total ? static_cast<double>(small) / static_cast<double>(total) : 0.0;

  const Matrix adapted = project(model.head, bank.items_f64());
  const Vector norms = adapted.rowwise().norm();
  d.adapted_norm_mean = norms.mean();
  d.adapted_norm_variance = (norms.array() - d.adapted_norm_mean).square().mean();

  d.holdout_normal_mean = std::numeric_limits<double>::quiet_NaN();
  d.holdout_anomaly_mean = std::numeric_limits<double>::quiet_NaN();
  if (holdout) {
    const auto nbrs = query_neighbors(bank, holdout->features, k, workers);
    const HoldoutMeans hm = holdout_means(model, *holdout, nbrs, workers);
    d.holdout_normal_mean = hm.normal;
    d.holdout_anomaly_mean = hm.anomaly;
  }
  return d;
}

}  // namespace cap
