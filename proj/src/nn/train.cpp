#include "emgtl/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "emgtl/errors.hpp"

namespace emgtl::nn {

namespace {

constexpr std::uint64_t kDropoutStream = 0x9e3779b97f4a7c15ULL;

// Contiguous runs of equal subject id, each cut to at most `chunk` rows.
std::vector<std::pair<std::size_t, std::size_t>> subject_runs(const std::vector<int>& subjects, std::size_t chunk) {
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  std::size_t begin = 0;
  while (begin < subjects.size()) {
    std::size_t end = begin + 1;
    while (end < subjects.size() && subjects[end] == subjects[begin] && end - begin < chunk) ++end;
    runs.emplace_back(begin, end);
    begin = end;
  }
  return runs;
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalResult evaluate(Model& model, const LabeledSet& data) {
  EvalResult r;
  if (data.size() == 0) return r;
  ForwardContext ctx;
  ctx.mode = Mode::Eval;
  std::size_t correct = 0;
  for (auto [b, e] : subject_runs(data.subjects, 256)) {
    ctx.subject = data.subjects[b];
    const Tensor logits = model.forward(data.inputs.slice_rows(b, e), ctx);
    const std::vector<int> labels(data.labels.begin() + static_cast<std::ptrdiff_t>(b),
                                  data.labels.begin() + static_cast<std::ptrdiff_t>(e));
    r.loss += softmax_cross_entropy(logits, labels).loss * static_cast<double>(e - b);
    const std::size_t c = logits.dim(1);
    for (std::size_t i = 0; i < e - b; ++i) {
      const double* row = logits.data() + i * c;
      const auto arg = static_cast<int>(std::max_element(row, row + c) - row);
      correct += arg == labels[i] ? 1 : 0;
    }
  }
  r.loss /= static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

}  // namespace

LabeledSet LabeledSet::subset(const std::vector<std::size_t>& rows) const {
  LabeledSet out;
  out.inputs = inputs.gather_rows(rows);
  for (std::size_t r : rows) {
    out.labels.push_back(labels[r]);
    out.subjects.push_back(subjects[r]);
  }
  return out;
}

void LabeledSet::validate() const {
  if (labels.size() != subjects.size() || (inputs.rank() > 0 && inputs.dim(0) != labels.size()))
    throw DataError("labeled set has " + std::to_string(labels.size()) + " labels, " +
                    std::to_string(subjects.size()) + " subject ids and inputs " + shape_string(inputs.shape()));
}

Tensor softmax(const Tensor& logits) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  Tensor p(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.data() + i * c;
    const double mx = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += (p[i * c + k] = std::exp(z[k] - mx));
    for (std::size_t k = 0; k < c; ++k) p[i * c + k] /= s;
  }
  return p;
}

LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size())
    throw DataError("logits " + shape_string(logits.shape()) + " do not match " + std::to_string(labels.size()) +
                    " labels");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  LossResult r;
  r.grad = Tensor(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
      throw DataError("label " + std::to_string(labels[i]) + " outside [0," + std::to_string(c) + ")");
    const double* z = logits.data() + i * c;
    const double mx = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += std::exp(z[k] - mx);
    const double lse = mx + std::log(s);
    r.loss += lse - z[labels[i]];
    for (std::size_t k = 0; k < c; ++k) {
      const double p = std::exp(z[k] - lse);
      r.grad[i * c + k] = (p - (static_cast<std::size_t>(labels[i]) == k ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  r.loss /= static_cast<double>(n);
  return r;
}

void adam_step(Model& model, double lr, const AdamConfig& cfg) {
  ++model.optimizer_step;
  const double t = static_cast<double>(model.optimizer_step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (Parameter* p : model.parameters()) {
    if (p->frozen) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      p->adam_m[i] = cfg.beta1 * p->adam_m[i] + (1.0 - cfg.beta1) * g;
      p->adam_v[i] = cfg.beta2 * p->adam_v[i] + (1.0 - cfg.beta2) * g * g;
      p->value[i] -= lr * (p->adam_m[i] / c1) / (std::sqrt(p->adam_v[i] / c2) + cfg.eps);
    }
  }
  model.after_update();
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (!(anneal_factor > 1.0)) throw ConfigError("anneal_factor must exceed 1");
  if (patience_epochs < 1) throw ConfigError("patience_epochs must be at least 1");
  if (max_epochs < 0) throw ConfigError("max_epochs must be non-negative");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in (0,1)");
  if (decays_to_stop < 1) throw ConfigError("decays_to_stop must be at least 1");
}

std::vector<std::vector<std::size_t>> subject_batches(const std::vector<int>& subjects,
                                                      const std::vector<std::size_t>& rows, std::size_t batch_size,
                                                      std::mt19937_64& rng, std::vector<int>* dropped) {
  std::map<int, std::vector<std::size_t>> by_subject;
  for (std::size_t r : rows) by_subject[subjects[r]].push_back(r);
  std::vector<std::vector<std::vector<std::size_t>>> per_subject;
  for (auto& [id, list] : by_subject) {
    if (list.size() < batch_size) {
      if (dropped) dropped->push_back(id);
      continue;
    }
    std::shuffle(list.begin(), list.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t b = 0; b < list.size(); b += batch_size) {
      const std::size_t e = std::min(list.size(), b + batch_size);
      if (e - b < 2) break;  // a single example has no batch variance
      batches.emplace_back(list.begin() + static_cast<std::ptrdiff_t>(b),
                           list.begin() + static_cast<std::ptrdiff_t>(e));
    }
    per_subject.push_back(std::move(batches));
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t k = 0;; ++k) {
    bool any = false;
    for (auto& batches : per_subject)
      if (k < batches.size()) {
        out.push_back(std::move(batches[k]));
        any = true;
      }
    if (!any) break;
  }
  return out;
}

TrainHistory train(Model& model, const LabeledSet& data, const TrainConfig& cfg, const LabeledSet* validation) {
  cfg.validate();
  data.validate();
  TrainHistory h;
  if (data.size() < cfg.batch_size)
    throw DataError("training set of " + std::to_string(data.size()) + " examples is smaller than one batch of " +
                    std::to_string(cfg.batch_size));

  std::mt19937_64 rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ kDropoutStream);

  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::size_t> train_rows;
  LabeledSet held_out;
  if (validation != nullptr) {
    validation->validate();
    train_rows = all;
    held_out = *validation;
  } else {
    std::shuffle(all.begin(), all.end(), rng);
    const auto n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(data.size()))));
    std::vector<std::size_t> val_rows(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_rows.assign(all.begin() + static_cast<std::ptrdiff_t>(n_val), all.end());
    std::sort(val_rows.begin(), val_rows.end());
    std::sort(train_rows.begin(), train_rows.end());
    held_out = data.subset(val_rows);
  }

  // Subjects with too few examples: find them once so validation can skip them.
  {
    std::mt19937_64 probe(0);
    subject_batches(data.subjects, train_rows, cfg.batch_size, probe, &h.dropped_subjects);
  }
  for (int id : h.dropped_subjects)
    h.warnings.push_back("subject " + std::to_string(id) + " has fewer examples than one batch and was dropped");
  if (!h.dropped_subjects.empty()) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < held_out.size(); ++i)
      if (std::find(h.dropped_subjects.begin(), h.dropped_subjects.end(), held_out.subjects[i]) ==
          h.dropped_subjects.end())
        keep.push_back(i);
    held_out = held_out.subset(keep);
  }

  double lr = cfg.learning_rate;
  double best = std::numeric_limits<double>::infinity();
  ModelState best_state = capture_state(model);
  int wait = 0;
  int decays_since_improvement = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto batches = subject_batches(data.subjects, train_rows, cfg.batch_size, rng);
    if (batches.empty()) throw DataError("no subject has enough examples for one batch");
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    double loss_sum = 0.0;
    std::size_t seen = 0;
    ForwardContext ctx;
    ctx.mode = Mode::Train;
    ctx.rng = &dropout_rng;
    for (const auto& rows : batches) {
      ctx.subject = data.subjects[rows[0]];
      const Tensor x = data.inputs.gather_rows(rows);
      std::vector<int> labels;
      for (std::size_t r : rows) labels.push_back(data.labels[r]);
      model.zero_grad();
      const Tensor logits = model.forward(x, ctx);
      LossResult lr_res = softmax_cross_entropy(logits, labels);
      if (!std::isfinite(lr_res.loss)) throw NumericalError("training loss became non-finite at epoch " +
                                                            std::to_string(epoch));
      model.backward(lr_res.grad);
      adam_step(model, lr);
      loss_sum += lr_res.loss * static_cast<double>(rows.size());
      seen += rows.size();
    }
    rec.train_loss = loss_sum / static_cast<double>(seen);

    const EvalResult ev = held_out.size() > 0 ? evaluate(model, held_out) : EvalResult{rec.train_loss, 0.0};
    if (!std::isfinite(ev.loss)) throw NumericalError("validation loss became non-finite at epoch " +
                                                      std::to_string(epoch));
    rec.validation_loss = ev.loss;
    rec.validation_accuracy = ev.accuracy;

    if (ev.loss < best) {
      best = ev.loss;
      best_state = capture_state(model);
      h.best_epoch = epoch;
      wait = 0;
      decays_since_improvement = 0;
      rec.improved = true;
    } else if (++wait >= cfg.patience_epochs) {
      lr /= cfg.anneal_factor;
      restore_state(model, best_state);
      ++h.decays;
      ++decays_since_improvement;
      wait = 0;
      rec.decayed = true;
    }
    h.epochs.push_back(rec);
    if (decays_since_improvement >= cfg.decays_to_stop) break;
  }
  if (h.best_epoch > 0) restore_state(model, best_state);
  h.best_validation_loss = best;
  return h;
}

void finalize_bn(Model& model, const LabeledSet& data, std::size_t chunk) {
  data.validate();
  std::vector<int> ids = data.subjects;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::map<int, std::vector<std::size_t>> rows;
  for (std::size_t i = 0; i < data.size(); ++i) rows[data.subjects[i]].push_back(i);

  for (BatchNorm* bn : model.batch_norms()) {
    for (int id : ids) {
      const std::optional<int> bank = model.bank_subject(bn, id);
      if (!bank) continue;
      bn->begin_collect();
      ForwardContext ctx;
      ctx.mode = Mode::Eval;
      ctx.subject = id;
      ctx.collect = bn;
      const auto& r = rows[id];
      for (std::size_t b = 0; b < r.size(); b += chunk) {
        const std::vector<std::size_t> part(r.begin() + static_cast<std::ptrdiff_t>(b),
                                            r.begin() + static_cast<std::ptrdiff_t>(std::min(r.size(), b + chunk)));
        model.forward(data.inputs.gather_rows(part), ctx);
      }
      bn->end_collect(*bank);
    }
  }
}

Tensor predict_log_proba(Model& model, const LabeledSet& data, Mode mode, int mc_passes, std::uint64_t seed,
                         std::size_t chunk) {
  data.validate();
  const std::size_t c = model.num_classes();
  Tensor out({data.size(), c});
  if (mode == Mode::Train) throw ConfigError("prediction cannot run in train mode");
  const int passes = mode == Mode::MonteCarlo ? std::max(1, mc_passes) : 1;
  std::mt19937_64 rng(seed ^ kDropoutStream);
  ForwardContext ctx;
  ctx.mode = mode;
  ctx.rng = &rng;
  for (auto [b, e] : subject_runs(data.subjects, chunk)) {
    ctx.subject = data.subjects[b];
    const Tensor x = data.inputs.slice_rows(b, e);
    Tensor acc({e - b, c});
    for (int p = 0; p < passes; ++p) acc += softmax(model.forward(x, ctx));
    for (std::size_t i = 0; i < acc.size(); ++i)
      out[b * c + i] = std::log(std::max(acc[i] / passes, std::numeric_limits<double>::min()));
  }
  return out;
}

std::vector<int> predict(Model& model, const LabeledSet& data, Mode mode, int mc_passes, std::uint64_t seed) {
  const Tensor lp = predict_log_proba(model, data, mode, mc_passes, seed);
  const std::size_t c = lp.dim(1);
  std::vector<int> out(data.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* row = lp.data() + i * c;
    out[i] = static_cast<int>(std::max_element(row, row + c) - row);
  }
  return out;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels) {
  if (predicted.size() != labels.size()) throw DataError("prediction and label counts differ");
  if (labels.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) ok += predicted[i] == labels[i] ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(labels.size());
}

double accuracy(Model& model, const LabeledSet& data, Mode mode, int mc_passes, std::uint64_t seed) {
  return accuracy(predict(model, data, mode, mc_passes, seed), data.labels);
}

}  // namespace emgtl::nn
