#include "stare/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

namespace stare {

LabelIndex::LabelIndex(const std::vector<Statement>& augmented, std::size_t num_query_facts) {
    for (std::size_t i = 0; i < num_query_facts && i < augmented.size(); ++i) {
        const Statement& s = augmented[i];
        map_[key_of(s)].push_back(s.object);
    }
    for (auto& [key, objs] : map_) {
        std::sort(objs.begin(), objs.end());
        objs.erase(std::unique(objs.begin(), objs.end()), objs.end());
    }
}

std::string LabelIndex::key_of(const Statement& s) {
    auto quals = s.qualifiers;
    std::sort(quals.begin(), quals.end());
    std::string key = std::to_string(s.subject) + "|" + std::to_string(s.relation);
    for (const auto& [qr, qv] : quals)
        key += "|" + std::to_string(qr) + ":" + std::to_string(qv);
    return key;
}

const std::vector<EntityId>* LabelIndex::objects_for(const Statement& s) const {
    auto it = map_.find(key_of(s));
    return it == map_.end() ? nullptr : &it->second;
}

Tensor build_labels(const Statement& query_source, const LabelIndex& index,
                    std::size_t num_entities, double epsilon) {
    const auto* objects = index.objects_for(query_source);
    if (objects == nullptr || objects->empty())
        throw Error("build_labels: query without a positive entity (key " +
                    LabelIndex::key_of(query_source) + ")");
    const double negative = epsilon / static_cast<double>(num_entities);
    Tensor row(1, num_entities + kNumReservedEntityRows, negative);
    for (EntityId o : *objects)
        row.data[static_cast<std::size_t>(o)] = (1.0 - epsilon) + negative;
    return row;
}

double bce_loss(const std::vector<double>& logits, const std::vector<double>& labels,
                const std::vector<std::uint8_t>& keep) {
    if (logits.size() != labels.size() || logits.size() != keep.size())
        throw ShapeError("bce_loss: length mismatch");
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!keep[i]) continue;
        double x = logits[i], y = labels[i];
        if (!std::isfinite(x)) throw Error("bce_loss: non-finite logit");
        total += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
        ++n;
    }
    if (n == 0) throw ShapeError("bce_loss: nothing kept");
    return total / static_cast<double>(n);
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParamMap& params, const std::map<std::string, Tensor>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        const Tensor& g = git->second;
        if (!g.same_shape(p)) throw ShapeError("adam: gradient shape mismatch for " + name);
        auto& [m, v] = state_[name];
        if (m.empty()) {
            m = Tensor(p.rows, p.cols);
            v = Tensor(p.rows, p.cols);
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * g.data[i];
            v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * g.data[i] * g.data[i];
            double mhat = m.data[i] / bc1;
            double vhat = v.data[i] / bc2;
            p.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

namespace {

Tensor batch_labels(const std::vector<Query>& batch, const LabelIndex& index,
                    std::size_t num_entities, double epsilon) {
    Tensor labels(batch.size(), num_entities + kNumReservedEntityRows);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Tensor row = build_labels(batch[i].source, index, num_entities, epsilon);
        std::copy(row.data.begin(), row.data.end(), labels.row(i));
    }
    return labels;
}

std::vector<std::uint8_t> loss_column_mask(std::size_t num_entities) {
    std::vector<std::uint8_t> keep(num_entities + kNumReservedEntityRows, 1);
    keep[num_entities] = 0;      // PAD
    keep[num_entities + 1] = 0;  // MASK
    return keep;
}

}  // namespace

double train_step(LinkPredictionModel& model, const std::vector<Query>& batch,
                  const LabelIndex& index, Adam& opt, const TrainConfig& cfg,
                  std::mt19937_64& dropout_rng) {
    Tape tape;
    std::map<std::string, Var> bound;
    QueryBatch qb = make_query_batch(batch);
    Var scores = model.forward(tape, qb, /*training=*/true, dropout_rng, &bound);
    Tensor labels = batch_labels(batch, index, model.num_entities(), cfg.label_smoothing);
    Var loss = tape.bce_with_logits(scores, std::move(labels),
                                    loss_column_mask(model.num_entities()));
    double loss_value = tape.val(loss).data[0];
    if (!std::isfinite(loss_value))
        throw Error("train_step: non-finite loss (" + std::to_string(loss_value) + ")");
    tape.backward(loss);
    std::map<std::string, Tensor> grads;
    for (const auto& [name, var] : bound) grads[name] = tape.grad_of(var);
    opt.step(model.params, grads);
    model.invalidate_cache();
    return loss_value;
}

std::vector<EpochLog> train(LinkPredictionModel& model, const TrainConfig& cfg,
                            std::ostream* log,
                            const std::function<bool(std::size_t, double)>& after_epoch) {
    LabelIndex index(model.augmented, 2 * model.num_base_facts);
    std::vector<Query> queries = model.training_queries();
    Adam opt(cfg.learning_rate);
    std::mt19937_64 shuffle_rng(cfg.seed);
    std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<EpochLog> history;
    history.reserve(cfg.epochs);

    std::vector<std::size_t> order(queries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto started = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double total = 0.0;
        std::size_t steps = 0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            std::size_t end = std::min(order.size(), at + cfg.batch_size);
            std::vector<Query> batch;
            batch.reserve(end - at);
            for (std::size_t i = at; i < end; ++i) batch.push_back(queries[order[i]]);
            total += train_step(model, batch, index, opt, cfg, dropout_rng);
            ++steps;
        }
        double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                             .count();
        double mean_loss = steps ? total / static_cast<double>(steps) : 0.0;
        history.push_back({epoch, mean_loss, seconds});
        if (log) (*log) << epoch << "\t" << mean_loss << "\t" << seconds << "\n";
        if (!cfg.checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
            epoch % cfg.checkpoint_every == 0)
            save_params(cfg.checkpoint_dir + "/checkpoint_" + std::to_string(epoch) + ".txt",
                        model.params);
        if (after_epoch && !after_epoch(epoch, mean_loss)) break;
    }
    if (!cfg.checkpoint_dir.empty())
        save_params(cfg.checkpoint_dir + "/checkpoint_final.txt", model.params);
    return history;
}

GradCheckReport grad_check(LinkPredictionModel& model, const std::vector<Query>& batch,
                           const LabelIndex& index, double smoothing, double step) {
    // Dropout must be off so the loss is a deterministic function of the
    // parameters.
    ModelConfig saved = model.config;
    model.config.encoder.dropout = 0.0;
    model.config.decoder.dropout = 0.0;

    QueryBatch qb = make_query_batch(batch);
    Tensor labels = batch_labels(batch, index, model.num_entities(), smoothing);
    auto keep = loss_column_mask(model.num_entities());

    auto loss_only = [&]() {
        Tape tape;
        std::mt19937_64 rng(0);
        Var scores = model.forward(tape, qb, /*training=*/true, rng);
        Var loss = tape.bce_with_logits(scores, labels, keep);
        return tape.val(loss).data[0];
    };

    std::map<std::string, Tensor> analytic;
    {
        Tape tape;
        std::mt19937_64 rng(0);
        std::map<std::string, Var> bound;
        Var scores = model.forward(tape, qb, /*training=*/true, rng, &bound);
        Var loss = tape.bce_with_logits(scores, labels, keep);
        tape.backward(loss);
        for (const auto& [name, var] : bound) analytic[name] = tape.grad_of(var);
    }

    GradCheckReport report;
    for (auto& [name, tensor] : model.params) {
        const Tensor& an = analytic.at(name);
        double worst = 0.0;
        for (std::size_t i = 0; i < tensor.size(); ++i) {
            double saved_value = tensor.data[i];
            tensor.data[i] = saved_value + step;
            double up = loss_only();
            tensor.data[i] = saved_value - step;
            double down = loss_only();
            tensor.data[i] = saved_value;
            double fd = (up - down) / (2.0 * step);
            double a = an.data[i];
            double rel = std::abs(fd - a) / std::max({std::abs(fd), std::abs(a), 1e-6});
            worst = std::max(worst, rel);
        }
        report.entries.push_back({name, worst});
        report.worst = std::max(report.worst, worst);
    }

    model.config = saved;
    model.invalidate_cache();
    return report;
}

}  // namespace stare
