#include "kwscl/cl_algorithms.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "kwscl/binary_io.hpp"
#include "kwscl/errors.hpp"

namespace kwscl::cl {

namespace {

constexpr std::array<std::string_view, 7> kNames = {"tinyol", "tinyol_batches", "tinyol_v2", "tinyol_v2_batches",
                                                     "lwf",    "lwf_batches",    "cwr"};

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> f) {
  return {f.data(), static_cast<Eigen::Index>(f.size())};
}

void apply(ClHead& head, const HeadGradient& g, double scale) {
  head.W.noalias() -= scale * g.dW;
  head.b.noalias() -= scale * g.db;
}

void mask_initial(HeadGradient& g, std::size_t initial) {
  const auto n = static_cast<Eigen::Index>(initial);
  g.dW.leftCols(n).setZero();
  g.db.head(n).setZero();
}

void consolidate(ClAlgorithmState& s, const ClConfig& cfg) {
  ClHead& cons = *s.consolidated_head;
  for (std::size_t j = 0; j < s.batch_class_mask.size(); ++j) {
    if (s.batch_class_mask[j] == 0) continue;
    const auto col = static_cast<Eigen::Index>(j);
    const double k = static_cast<double>(s.consolidation_counts[j]);
    cons.W.col(col) = (cons.W.col(col) * k + s.head.W.col(col)) / (k + 1.0);
    cons.b(col) = (cons.b(col) * k + s.head.b(col)) / (k + 1.0);
    ++s.consolidation_counts[j];
  }
  if (cfg.cwr_reinit == CwrReinit::zeros) {
    s.head.W.setZero();
    s.head.b.setZero();
  }
  std::fill(s.batch_class_mask.begin(), s.batch_class_mask.end(), std::uint8_t{0});
}

// Closes the open batch: applies the mean accumulated gradient, refreshes
// the LwF copy, or consolidates CWR.
void close_batch(ClAlgorithmState& s, const ClConfig& cfg) {
  if (s.accumulator) {
    const double inv = 1.0 / static_cast<double>(s.accumulated);
    s.head.W.noalias() -= cfg.learning_rate * (s.accumulator->dW * inv);
    s.head.b.noalias() -= cfg.learning_rate * (s.accumulator->db * inv);
    s.accumulator->dW.setZero();
    s.accumulator->db.setZero();
  }
  if (s.algorithm == Algorithm::lwf_batches) s.copy_head = s.head;
  if (s.algorithm == Algorithm::cwr) consolidate(s, cfg);
  s.accumulated = 0;
  ++s.batches_completed;
}

bool all_finite(const ClHead& h) { return h.W.allFinite() && h.b.allFinite(); }

}  // namespace

std::string_view to_string(Algorithm a) { return kNames.at(static_cast<std::size_t>(a)); }

Algorithm parse_algorithm(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return static_cast<Algorithm>(i);
  throw ConfigError("unknown algorithm '" + std::string(name) + "'");
}

bool uses_gradient_batches(Algorithm a) {
  return a == Algorithm::tinyol_batches || a == Algorithm::tinyol_v2_batches;
}

bool masks_initial_classes(Algorithm a) { return a == Algorithm::tinyol_v2 || a == Algorithm::tinyol_v2_batches; }

bool is_lwf(Algorithm a) { return a == Algorithm::lwf || a == Algorithm::lwf_batches; }

namespace {
bool has_batches(Algorithm a) {
  return uses_gradient_batches(a) || a == Algorithm::lwf_batches || a == Algorithm::cwr;
}
}  // namespace

ClHead ClHead::zeros(std::size_t feature_dim, std::vector<std::string> labels) {
  ClHead h;
  h.W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(feature_dim), static_cast<Eigen::Index>(labels.size()));
  h.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(labels.size()));
  h.class_labels = std::move(labels);
  return h;
}

void ClHead::validate() const {
  if (static_cast<std::size_t>(W.cols()) != class_labels.size() || b.size() != W.cols())
    throw ConfigError("head shape mismatch: W has " + std::to_string(W.cols()) + " columns, b has " +
                      std::to_string(b.size()) + " entries, " + std::to_string(class_labels.size()) + " labels");
  if (!all_finite(*this)) throw NumericError("head contains non-finite parameters");
}

HeadGradient HeadGradient::zeros(std::size_t feature_dim, std::size_t classes) {
  return {Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(feature_dim), static_cast<Eigen::Index>(classes)),
          Eigen::VectorXd::Zero(static_cast<Eigen::Index>(classes))};
}

void ClConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lwf_lambda >= 0.0)) throw ConfigError("lwf_lambda must be >= 0");
}

bool ClAlgorithmState::operator==(const ClAlgorithmState& o) const {
  const auto grad_eq = [](const std::optional<HeadGradient>& a, const std::optional<HeadGradient>& b) {
    if (a.has_value() != b.has_value()) return false;
    return !a || (a->dW == b->dW && a->db == b->db);
  };
  return algorithm == o.algorithm && initial_class_count == o.initial_class_count && head == o.head &&
         copy_head == o.copy_head && consolidated_head == o.consolidated_head &&
         grad_eq(accumulator, o.accumulator) && accumulated == o.accumulated && samples_seen == o.samples_seen &&
         batches_completed == o.batches_completed && per_class_seen == o.per_class_seen &&
         consolidation_counts == o.consolidation_counts && batch_class_mask == o.batch_class_mask;
}

ClAlgorithmState make_state(Algorithm algorithm, const ClHead& head, const ClConfig& cfg) {
  cfg.validate();
  head.validate();
  if (cfg.initial_class_count > head.class_count())
    throw ConfigError("initial_class_count exceeds the head's class count");
  ClAlgorithmState s;
  s.algorithm = algorithm;
  s.initial_class_count = cfg.initial_class_count;
  s.head = head;
  const std::size_t n = head.class_count();
  s.per_class_seen.assign(n, 0);
  if (is_lwf(algorithm)) s.copy_head = head;
  if (algorithm == Algorithm::cwr) {
    s.consolidated_head = head;
    s.consolidation_counts.assign(n, 0);
    s.batch_class_mask.assign(n, 0);
  }
  if (uses_gradient_batches(algorithm)) s.accumulator = HeadGradient::zeros(head.feature_dim(), n);
  return s;
}

Eigen::VectorXd head_forward(const ClHead& head, std::span<const double> features) {
  if (features.size() != head.feature_dim())
    throw ConfigError("feature length " + std::to_string(features.size()) + " does not match head input " +
                      std::to_string(head.feature_dim()));
  return head.W.transpose() * as_vector(features) + head.b;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double shift = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - shift).exp();
  return p / p.sum();
}

HeadGradient ce_gradient(std::span<const double> features, const Eigen::VectorXd& probs, std::size_t label) {
  if (label >= static_cast<std::size_t>(probs.size()))
    throw ConfigError("label " + std::to_string(label) + " out of range");
  HeadGradient g;
  g.db = probs;
  g.db(static_cast<Eigen::Index>(label)) -= 1.0;
  g.dW = as_vector(features) * g.db.transpose();
  return g;
}

HeadGradient lwf_gradient(std::span<const double> features, const Eigen::VectorXd& p_train,
                          const Eigen::VectorXd& p_copy, std::size_t label, double lambda) {
  if (label >= static_cast<std::size_t>(p_train.size()))
    throw ConfigError("label " + std::to_string(label) + " out of range");
  HeadGradient g;
  g.db = (1.0 + lambda) * p_train - lambda * p_copy;
  g.db(static_cast<Eigen::Index>(label)) -= 1.0;
  g.dW = as_vector(features) * g.db.transpose();
  return g;
}

double ce_loss(const ClHead& head, std::span<const double> features, std::size_t label) {
  const Eigen::VectorXd z = head_forward(head, features);
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return lse - z(static_cast<Eigen::Index>(label));
}

double lwf_loss(const ClHead& train, const ClHead& copy, std::span<const double> features, std::size_t label,
                double lambda) {
  const Eigen::VectorXd z = head_forward(train, features);
  const double m = z.maxCoeff();
  const Eigen::VectorXd log_p = z.array() - (m + std::log((z.array() - m).exp().sum()));
  const Eigen::VectorXd p_copy = softmax(head_forward(copy, features));
  return -log_p(static_cast<Eigen::Index>(label)) - lambda * p_copy.dot(log_p);
}

ClHead expand_head(const ClHead& head, std::span<const std::string> new_classes) {
  std::set<std::string> seen(head.class_labels.begin(), head.class_labels.end());
  for (const auto& label : new_classes)
    if (!seen.insert(label).second) throw ConfigError("duplicate class label '" + label + "'");

  const auto m = head.W.rows();
  const auto n_old = head.W.cols();
  const auto n_new = n_old + static_cast<Eigen::Index>(new_classes.size());
  ClHead out;
  out.W = Eigen::MatrixXd::Zero(m, n_new);
  out.W.leftCols(n_old) = head.W;
  out.b = Eigen::VectorXd::Zero(n_new);
  out.b.head(n_old) = head.b;
  out.class_labels = head.class_labels;
  out.class_labels.insert(out.class_labels.end(), new_classes.begin(), new_classes.end());
  return out;
}

void cl_step(ClAlgorithmState& s, std::span<const double> features, std::size_t label, const ClConfig& cfg) {
  if (label >= s.head.class_count())
    throw ConfigError("label " + std::to_string(label) + " out of range for " +
                      std::to_string(s.head.class_count()) + " classes");
  for (double v : features)
    if (!std::isfinite(v)) throw NumericError("non-finite feature value");

  const Eigen::VectorXd p = softmax(head_forward(s.head, features));
  ++s.samples_seen;
  ++s.per_class_seen[label];

  switch (s.algorithm) {
    case Algorithm::tinyol:
    case Algorithm::tinyol_v2: {
      HeadGradient g = ce_gradient(features, p, label);
      if (masks_initial_classes(s.algorithm)) mask_initial(g, s.initial_class_count);
      apply(s.head, g, cfg.learning_rate);
      break;
    }
    case Algorithm::tinyol_batches:
    case Algorithm::tinyol_v2_batches: {
      HeadGradient g = ce_gradient(features, p, label);
      if (masks_initial_classes(s.algorithm)) mask_initial(g, s.initial_class_count);
      s.accumulator->dW += g.dW;
      s.accumulator->db += g.db;
      break;
    }
    case Algorithm::lwf:
    case Algorithm::lwf_batches: {
      const Eigen::VectorXd p_copy = softmax(head_forward(*s.copy_head, features));
      apply(s.head, lwf_gradient(features, p, p_copy, label, cfg.lwf_lambda), cfg.learning_rate);
      break;
    }
    case Algorithm::cwr:
      apply(s.head, ce_gradient(features, p, label), cfg.learning_rate);
      s.batch_class_mask[label] = 1;
      break;
  }

  if (has_batches(s.algorithm) && ++s.accumulated == cfg.batch_size) close_batch(s, cfg);
  if (!all_finite(s.head)) throw NumericError("training head became non-finite");
}

void finish_stream(ClAlgorithmState& s, const ClConfig& cfg) {
  if (s.accumulated > 0) close_batch(s, cfg);
}

const ClHead& prediction_head(const ClAlgorithmState& s, PredictionHead role) {
  if (role == PredictionHead::evaluation && s.consolidated_head) return *s.consolidated_head;
  return s.head;
}

std::size_t argmax(const Eigen::VectorXd& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  return best;
}

std::size_t predict(const ClAlgorithmState& s, std::span<const double> features, PredictionHead role) {
  return argmax(head_forward(prediction_head(s, role), features));
}

namespace {

void write_head(std::ostream& out, const ClHead& h) {
  for (Eigen::Index i = 0; i < h.W.rows(); ++i)
    for (Eigen::Index j = 0; j < h.W.cols(); ++j) io::write<double>(out, h.W(i, j));
  for (Eigen::Index j = 0; j < h.b.size(); ++j) io::write<double>(out, h.b(j));
}

void read_matrix(std::istream& in, Eigen::MatrixXd& W, Eigen::VectorXd& b, std::size_t m, std::size_t n) {
  W.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  b.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < W.rows(); ++i)
    for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = io::read<double>(in, "head weights");
  for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = io::read<double>(in, "head bias");
}

ClHead read_head(std::istream& in, std::size_t m, std::size_t n) {
  ClHead h;
  read_matrix(in, h.W, h.b, m, n);
  return h;
}

}  // namespace

void save_checkpoint(const ClAlgorithmState& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const std::size_t n = s.head.class_count();
  io::write_magic(out, "CLHD0001");
  io::write<std::uint8_t>(out, static_cast<std::uint8_t>(s.algorithm));
  io::write<std::uint32_t>(out, static_cast<std::uint32_t>(s.head.feature_dim()));
  io::write<std::uint32_t>(out, static_cast<std::uint32_t>(n));
  io::write<std::uint32_t>(out, static_cast<std::uint32_t>(s.initial_class_count));
  io::write<std::uint64_t>(out, s.batches_completed);
  for (auto c : s.per_class_seen) io::write<std::uint64_t>(out, c);
  write_head(out, s.head);
  if (s.copy_head) write_head(out, *s.copy_head);
  if (s.consolidated_head) write_head(out, *s.consolidated_head);

  io::write<std::uint64_t>(out, s.samples_seen);
  io::write<std::uint64_t>(out, s.accumulated);
  if (s.accumulator) {
    for (Eigen::Index i = 0; i < s.accumulator->dW.rows(); ++i)
      for (Eigen::Index j = 0; j < s.accumulator->dW.cols(); ++j) io::write<double>(out, s.accumulator->dW(i, j));
    for (Eigen::Index j = 0; j < s.accumulator->db.size(); ++j) io::write<double>(out, s.accumulator->db(j));
  }
  if (s.algorithm == Algorithm::cwr) {
    for (auto c : s.consolidation_counts) io::write<std::uint64_t>(out, c);
    for (auto c : s.batch_class_mask) io::write<std::uint8_t>(out, c);
  }
  for (const auto& label : s.head.class_labels) {
    io::write<std::uint32_t>(out, static_cast<std::uint32_t>(label.size()));
    out.write(label.data(), static_cast<std::streamsize>(label.size()));
  }
  if (!out) throw DataError("write failed for " + path.string());
}

ClAlgorithmState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  io::expect_magic(in, "CLHD0001");
  ClAlgorithmState s;
  const auto tag = io::read<std::uint8_t>(in, "algorithm");
  if (tag >= kAllAlgorithms.size()) throw DataError("unknown algorithm tag " + std::to_string(tag));
  s.algorithm = static_cast<Algorithm>(tag);
  const std::size_t m = io::read<std::uint32_t>(in, "M");
  const std::size_t n = io::read<std::uint32_t>(in, "N");
  s.initial_class_count = io::read<std::uint32_t>(in, "M_old");
  if (s.initial_class_count > n) throw DataError("M_old exceeds N");
  s.batches_completed = io::read<std::uint64_t>(in, "batches_completed");
  s.per_class_seen.resize(n);
  for (auto& c : s.per_class_seen) c = io::read<std::uint64_t>(in, "per_class_seen");
  s.head = read_head(in, m, n);
  if (is_lwf(s.algorithm)) s.copy_head = read_head(in, m, n);
  if (s.algorithm == Algorithm::cwr) s.consolidated_head = read_head(in, m, n);

  s.samples_seen = io::read<std::uint64_t>(in, "samples_seen");
  s.accumulated = io::read<std::uint64_t>(in, "accumulated");
  if (uses_gradient_batches(s.algorithm)) {
    HeadGradient g;
    read_matrix(in, g.dW, g.db, m, n);
    s.accumulator = std::move(g);
  }
  if (s.algorithm == Algorithm::cwr) {
    s.consolidation_counts.resize(n);
    for (auto& c : s.consolidation_counts) c = io::read<std::uint64_t>(in, "consolidation counts");
    s.batch_class_mask.resize(n);
    for (auto& c : s.batch_class_mask) c = io::read<std::uint8_t>(in, "batch class mask");
  }
  std::vector<std::string> labels(n);
  for (auto& label : labels) {
    const auto len = io::read<std::uint32_t>(in, "label length");
    label.resize(len);
    in.read(label.data(), len);
    if (!in) throw DataError("truncated file while reading labels");
  }
  s.head.class_labels = labels;
  if (s.copy_head) s.copy_head->class_labels = labels;
  if (s.consolidated_head) s.consolidated_head->class_labels = labels;
  s.head.validate();
  return s;
}

}  // namespace kwscl::cl
