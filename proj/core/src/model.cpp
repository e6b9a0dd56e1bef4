#include "cap/model.h"

#include <cmath>
#include <random>

#include "cap/binary_io.h"
#include "cap/errors.h"

namespace cap {

std::string_view head_variant_name(HeadVariant v) {
  switch (v) {
    case HeadVariant::Linear: return "l";
    case HeadVariant::LinearRelu: return "l-relu";
    case HeadVariant::LinearReluLinear: return "l-relu-l";
  }
  return "?";
}

HeadVariant parse_head_variant(std::string_view name) {
  if (name == "l" || name == "linear") return HeadVariant::Linear;
  if (name == "l-relu" || name == "linear-relu") return HeadVariant::LinearRelu;
  if (name == "l-relu-l" || name == "linear-relu-linear") return HeadVariant::LinearReluLinear;
  throw ConfigError("unknown head variant \"" + std::string(name) + "\"");
}

std::size_t head_matrix_count(HeadVariant v) { return v == HeadVariant::LinearReluLinear ? 2 : 1; }

std::vector<Matrix*> ModelParams::parameters() {
  std::vector<Matrix*> out;
  for (auto& m : head.matrices) out.push_back(&m);
  if (attention) {
    out.push_back(&attention->w_q);
    out.push_back(&attention->w_k);
  }
  return out;
}

std::vector<const Matrix*> ModelParams::parameters() const {
  std::vector<const Matrix*> out;
  for (const auto& m : head.matrices) out.push_back(&m);
  if (attention) {
    out.push_back(&attention->w_q);
    out.push_back(&attention->w_k);
  }
  return out;
}

std::vector<std::string> ModelParams::parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < head.matrices.size(); ++i) out.push_back("head[" + std::to_string(i) + "]");
  if (attention) {
    out.emplace_back("w_q");
    out.emplace_back("w_k");
  }
  return out;
}

void validate(const ModelParams& model) {
  if (model.dim == 0) throw DataError("model dimension must be >= 1");
  if (model.head.matrices.size() != head_matrix_count(model.head.variant)) {
    throw DataError("head variant " + std::string(head_variant_name(model.head.variant)) + " expects " +
                    std::to_string(head_matrix_count(model.head.variant)) + " matrices");
  }
  const auto d = static_cast<Eigen::Index>(model.dim);
  for (const Matrix* m : model.parameters()) {
    if (m->rows() != d || m->cols() != d) throw DataError("model parameter is not D x D");
    if (!m->allFinite()) throw NumericalError("model parameter has non-finite entries");
  }
}

ModelParams init_model(std::size_t dim, HeadVariant variant, bool attention_enabled, std::uint64_t seed) {
  if (dim == 0) throw ConfigError("model dimension must be >= 1");
  const auto d = static_cast<Eigen::Index>(dim);
  ModelParams model;
  model.dim = dim;
  model.head.variant = variant;
  for (std::size_t i = 0; i < head_matrix_count(variant); ++i) model.head.matrices.push_back(Matrix::Identity(d, d));
  if (attention_enabled) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    AttentionParams attn{Matrix(d, d), Matrix(d, d)};
    for (Eigen::Index i = 0; i < attn.w_q.size(); ++i) attn.w_q.data()[i] = gauss(rng);
    for (Eigen::Index i = 0; i < attn.w_k.size(); ++i) attn.w_k.data()[i] = gauss(rng);
    model.attention = std::move(attn);
  }
  return model;
}

Matrix project(const HeadParams& head, const Matrix& input) {
  if (head.matrices.empty()) throw DataError("head has no matrices");
  if (input.cols() != head.matrices.front().cols()) {
    throw DataError("project: input dimension " + std::to_string(input.cols()) + " does not match head dimension " +
                    std::to_string(head.matrices.front().cols()));
  }
  switch (head.variant) {
    case HeadVariant::Linear:
      return input * head.matrices[0].transpose();
    case HeadVariant::LinearRelu:
      return (input * head.matrices[0].transpose()).cwiseMax(0.0);
    case HeadVariant::LinearReluLinear:
      return (input * head.matrices[0].transpose()).cwiseMax(0.0) * head.matrices[1].transpose();
  }
  throw DataError("unknown head variant");
}

Vector project(const HeadParams& head, const Vector& input) {
  return project(head, Matrix(input.transpose())).row(0).transpose();
}

AttentionResult reformed_attention(const AttentionParams& attn, const Matrix& m_hat) {
  if (m_hat.rows() < 1) throw DataError("reformed_attention: need at least one row");
  if (m_hat.cols() != attn.w_q.rows() || m_hat.cols() != attn.w_k.rows()) {
    throw DataError("reformed_attention: dimension mismatch");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(m_hat.cols()));
  const Matrix q = m_hat * attn.w_q;
  const Matrix k = m_hat * attn.w_k;
  Matrix a = (q * k.transpose()) * scale;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    if (!a.row(r).allFinite()) throw NumericalError("reformed_attention: non-finite logits in row " + std::to_string(r));
    const double mx = a.row(r).maxCoeff();
    a.row(r) = (a.row(r).array() - mx).exp().matrix();
    a.row(r) /= a.row(r).sum();
  }
  Matrix attended = a * m_hat;
  return {std::move(a), std::move(attended)};
}

NormalRepresentation normal_representation(const Matrix& m_hat, const AttentionParams* attn) {
  const Eigen::Index k = m_hat.rows();
  if (k < 1) throw DataError("normal_representation: need at least one row");
  Matrix a;
  Matrix attended;
  if (attn) {
    auto res = reformed_attention(*attn, m_hat);
    a = std::move(res.attention);
    attended = std::move(res.attended);
  } else {
    a = Matrix::Constant(k, k, 1.0 / static_cast<double>(k));
    attended = a * m_hat;
  }
  const double inv_k = 1.0 / static_cast<double>(k);
  NormalRepresentation out;
  out.z_normal = ((m_hat + attended).colwise().sum() * inv_k).transpose();
  out.mix_weights = ((a.colwise().sum().array() + 1.0) * inv_k).matrix().transpose();
  out.attention = std::move(a);
  return out;
}

ForwardOutput forward(const ModelParams& model, const Vector& z, const Matrix& neighbor_rows) {
  const auto d = static_cast<Eigen::Index>(model.dim);
  if (z.size() != d || neighbor_rows.cols() != d) {
    throw DataError("forward: dimension mismatch (model D=" + std::to_string(model.dim) + ")");
  }
  ForwardOutput out;
  out.z = z;
  out.z_hat = project(model.head, z);
  out.m_hat = project(model.head, neighbor_rows);
  auto rep = normal_representation(out.m_hat, model.attention ? &*model.attention : nullptr);
  out.attention_matrix = std::move(rep.attention);
  out.z_normal = std::move(rep.z_normal);
  out.mix_weights = std::move(rep.mix_weights);
  return out;
}

ForwardOutput forward(const ModelParams& model, const Vector& z, const NeighborSet& neighbors) {
  return forward(model, z, neighbors.matrix);
}

// ---------------------------------------------------------------------------
// Persistence

std::string serialize_model(const ModelParams& model, std::string_view metadata) {
  validate(model);
  io::ByteWriter w;
  w.put_magic(kModelMagic);
  w.put_u32(kModelVersion);
  w.put_u8(static_cast<std::uint8_t>(model.head.variant));
  w.put_u8(model.attention ? 1 : 0);
  w.put_u64(model.dim);
  for (const Matrix* m : model.parameters()) {
    for (Eigen::Index i = 0; i < m->size(); ++i) w.put_f32(static_cast<float>(m->data()[i]));
  }
  w.put_text_block(metadata);
  return w.release();
}

ModelParams deserialize_model(std::string_view bytes, std::string* metadata) {
  io::ByteReader r(bytes, "model file");
  r.expect_magic(kModelMagic);
  const std::uint32_t version = r.u32();
  if (version != kModelVersion) throw DataError("model file: unsupported version " + std::to_string(version));
  const std::uint8_t variant = r.u8();
  if (variant > 2) throw DataError("model file: unknown head variant code " + std::to_string(variant));
  const std::uint8_t attention = r.u8();
  if (attention > 1) throw DataError("model file: bad attention flag " + std::to_string(attention));
  const std::uint64_t dim = r.u64();
  if (dim == 0 || dim > (std::uint64_t{1} << 20)) throw DataError("model file: implausible dimension " + std::to_string(dim));

  ModelParams model;
  model.dim = static_cast<std::size_t>(dim);
  model.head.variant = static_cast<HeadVariant>(variant);
  const auto d = static_cast<Eigen::Index>(dim);
  const std::size_t count = head_matrix_count(model.head.variant) + (attention ? 2 : 0);
  r.require(4 * dim * dim * count, "payload");
  for (std::size_t i = 0; i < head_matrix_count(model.head.variant); ++i) model.head.matrices.emplace_back(d, d);
  if (attention) model.attention = AttentionParams{Matrix(d, d), Matrix(d, d)};
  for (Matrix* m : model.parameters()) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = static_cast<double>(r.f32());
  }
  std::string meta = r.text_block();
  if (metadata) *metadata = std::move(meta);
  validate(model);
  return model;
}

void save_model(const ModelParams& model, const std::filesystem::path& path, std::string_view metadata) {
  io::write_file(path, serialize_model(model, metadata));
}

ModelParams load_model(const std::filesystem::path& path, std::string* metadata) {
  return deserialize_model(io::read_file(path), metadata);
}

void round_to_storage_precision(ModelParams& model) {
  for (Matrix* m : model.parameters()) *m = m->cast<float>().cast<double>();
}

}  // namespace cap
