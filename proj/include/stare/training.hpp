#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "stare/model.hpp"

namespace stare {

struct TrainConfig {
    std::size_t epochs = 400;
    std::size_t batch_size = 128;
    double learning_rate = 1e-4;
    double label_smoothing = 0.1;
    std::uint64_t seed = 42;
    std::size_t checkpoint_every = 0;  // 0 = only the final checkpoint
    std::string checkpoint_dir;        // empty = no checkpoints
};

// 1-N target index over the augmented train facts: every entity completing
// (s, r, qualifier multiset) is a positive. Keys include the qualifier
// multiset, so the same (s, r) with different qualifiers are distinct queries.
class LabelIndex {
public:
    LabelIndex() = default;
    // Consumes facts [0, num_query_facts) of the augmented statement list
    // (base + inverse facts; self-loops are structural, not queries).
    LabelIndex(const std::vector<Statement>& augmented, std::size_t num_query_facts);

    static std::string key_of(const Statement& s);
    const std::vector<EntityId>* objects_for(const Statement& s) const;

private:
    std::unordered_map<std::string, std::vector<EntityId>> map_;
};

// Smoothed 1-N target row of width num_entities + 2 (reserved columns get the
// negative value and are excluded from the loss by the column mask).
Tensor build_labels(const Statement& query_source, const LabelIndex& index,
                    std::size_t num_entities, double epsilon);

// Definitional mean binary cross entropy on logits over kept columns,
// numerically stabilized. The differentiable twin lives on the tape.
double bce_loss(const std::vector<double>& logits, const std::vector<double>& labels,
                const std::vector<std::uint8_t>& keep);

class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(ParamMap& params, const std::map<std::string, Tensor>& grads);
    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::map<std::string, std::pair<Tensor, Tensor>> state_;  // first/second moments
};

// One optimization step: full-graph encoder forward, decoder over the batch,
// smoothed 1-N BCE, backward, Adam update. Returns the batch loss. Throws on
// a non-finite loss.
double train_step(LinkPredictionModel& model, const std::vector<Query>& batch,
                  const LabelIndex& index, Adam& opt, const TrainConfig& cfg,
                  std::mt19937_64& dropout_rng);

struct EpochLog {
    std::size_t epoch;
    double mean_loss;
    double seconds;
};

// Epoch loop with seeded batch shuffling; writes one tab-separated line per
// epoch to `log` when given and checkpoints per config. `after_epoch`, when
// set, may stop training early by returning false.
std::vector<EpochLog> train(LinkPredictionModel& model, const TrainConfig& cfg,
                            std::ostream* log = nullptr,
                            const std::function<bool(std::size_t, double)>& after_epoch = {});

struct GradCheckEntry {
    std::string name;
    double max_rel_err;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double worst = 0.0;
};

// Central finite differences against the analytic gradients for every
// parameter tensor, dropout forced to zero. Relative error uses
// |fd - analytic| / max(|fd|, |analytic|, 1e-6).
GradCheckReport grad_check(LinkPredictionModel& model, const std::vector<Query>& batch,
                           const LabelIndex& index, double smoothing, double step = 1e-5);

}  // namespace stare
