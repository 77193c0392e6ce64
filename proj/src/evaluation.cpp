#include "stare/evaluation.hpp"

#include <algorithm>
#include <sstream>

#include "stare/training.hpp"

namespace stare {

void FilterIndex::insert(const std::string& key, EntityId id) {
    auto& set = map_[key];
    auto at = std::lower_bound(set.begin(), set.end(), id);
    if (at == set.end() || *at != id) set.insert(at, id);
}

void FilterIndex::add_statement(const Statement& base, const Vocabulary& vocab) {
    insert(LabelIndex::key_of(base), base.object);
    Statement inv;
    inv.subject = base.object;
    inv.relation = vocab.inverse_relation(base.relation);
    inv.object = base.subject;
    inv.qualifiers = base.qualifiers;
    insert(LabelIndex::key_of(inv), inv.object);
}

void FilterIndex::add_split(const std::vector<Statement>& base_statements,
                            const Vocabulary& vocab) {
    for (const auto& s : base_statements) add_statement(s, vocab);
}

const std::vector<EntityId>* FilterIndex::find(const Statement& query) const {
    auto it = map_.find(LabelIndex::key_of(query));
    return it == map_.end() ? nullptr : &it->second;
}

FilterIndex build_filter_index(const std::vector<const std::vector<Statement>*>& splits,
                               const Vocabulary& vocab) {
    FilterIndex index;
    for (const auto* split : splits) index.add_split(*split, vocab);
    return index;
}

double filtered_rank(const std::vector<double>& scores, EntityId gold,
                     const std::vector<EntityId>& filter_set,
                     const std::vector<std::uint8_t>& candidate_mask) {
    if (gold < 0 || static_cast<std::size_t>(gold) >= scores.size())
        throw Error("filtered_rank: gold id out of range");
    if (scores.size() != candidate_mask.size())
        throw ShapeError("filtered_rank: mask length mismatch");
    if (!candidate_mask[static_cast<std::size_t>(gold)])
        throw Error("filtered_rank: gold id is masked from ranking");
    const double gold_score = scores[static_cast<std::size_t>(gold)];
    std::size_t above = 0, tied = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (!candidate_mask[j]) continue;
        auto id = static_cast<EntityId>(j);
        if (id == gold) continue;
        if (std::binary_search(filter_set.begin(), filter_set.end(), id)) continue;
        if (scores[j] > gold_score)
            ++above;
        else if (scores[j] == gold_score)
            ++tied;
    }
    const double optimistic = 1.0 + static_cast<double>(above);
    const double pessimistic = optimistic + static_cast<double>(tied);
    return (optimistic + pessimistic) / 2.0;
}

Metrics compute_metrics(const std::vector<double>& ranks) {
    if (ranks.empty()) throw Error("compute_metrics: empty rank list");
    Metrics m;
    m.count = ranks.size();
    for (double r : ranks) {
        m.mrr += 1.0 / r;
        m.h1 += r <= 1.0 ? 1.0 : 0.0;
        m.h5 += r <= 5.0 ? 1.0 : 0.0;
        m.h10 += r <= 10.0 ? 1.0 : 0.0;
    }
    auto n = static_cast<double>(ranks.size());
    m.mrr /= n;
    m.h1 /= n;
    m.h5 /= n;
    m.h10 /= n;
    return m;
}

RankReport evaluate_queries(const BatchScorer& scorer, const LinkPredictionModel& model,
                            const std::vector<Statement>& test_base, const FilterIndex& filter,
                            std::size_t batch_size) {
    if (batch_size == 0) throw Error("evaluate_queries: batch size must be positive");
    const auto candidate = model.candidate_mask();
    RankReport report;

    struct Pending {
        Query query;
        bool subject_dir;
    };
    std::vector<Pending> pending;
    pending.reserve(2 * test_base.size());
    for (const auto& s : test_base) {
        auto [obj_q, sub_q] = model.eval_queries(s);
        pending.push_back({std::move(obj_q), false});
        pending.push_back({std::move(sub_q), true});
    }

    for (std::size_t at = 0; at < pending.size(); at += batch_size) {
        std::size_t end = std::min(pending.size(), at + batch_size);
        std::vector<Query> batch;
        batch.reserve(end - at);
        for (std::size_t i = at; i < end; ++i) batch.push_back(pending[i].query);
        Tensor scores = scorer(batch);
        for (std::size_t i = at; i < end; ++i) {
            const Query& q = pending[i].query;
            const auto* fset = filter.find(q.source);
            if (fset == nullptr)
                throw Error("evaluate_queries: query key missing from the filter index");
            std::vector<double> row(scores.row(i - at), scores.row(i - at) + scores.cols);
            double rank = filtered_rank(row, q.target, *fset, candidate);
            (pending[i].subject_dir ? report.subject_ranks : report.object_ranks).push_back(rank);
        }
    }

    report.object_dir = compute_metrics(report.object_ranks);
    report.subject_dir = compute_metrics(report.subject_ranks);
    report.average.mrr = (report.object_dir.mrr + report.subject_dir.mrr) / 2.0;
    report.average.h1 = (report.object_dir.h1 + report.subject_dir.h1) / 2.0;
    report.average.h5 = (report.object_dir.h5 + report.subject_dir.h5) / 2.0;
    report.average.h10 = (report.object_dir.h10 + report.subject_dir.h10) / 2.0;
    report.average.count = report.object_dir.count + report.subject_dir.count;
    return report;
}

RankReport evaluate_model(LinkPredictionModel& model, const std::vector<Statement>& test_base,
                          const FilterIndex& filter, std::size_t batch_size) {
    BatchScorer scorer = [&model](const std::vector<Query>& batch) {
        return model.score(batch);
    };
    return evaluate_queries(scorer, model, test_base, filter, batch_size);
}

namespace {

void metrics_row(std::ostringstream& out, const char* name, const Metrics& m) {
    out << name << "\t" << m.mrr << "\t" << m.h1 << "\t" << m.h5 << "\t" << m.h10 << "\t"
        << m.count << "\n";
}

}  // namespace

std::string metrics_table(const RankReport& report) {
    std::ostringstream out;
    out << "direction\tMRR\tH@1\tH@5\tH@10\tqueries\n";
    metrics_row(out, "object", report.object_dir);
    metrics_row(out, "subject", report.subject_dir);
    metrics_row(out, "average", report.average);
    return out.str();
}

std::string metrics_records(const RankReport& report) {
    std::ostringstream out;
    auto emit = [&out](const char* dir, const Metrics& m) {
        out << "mrr " << dir << " " << m.mrr << "\n";
        out << "h1 " << dir << " " << m.h1 << "\n";
        out << "h5 " << dir << " " << m.h5 << "\n";
        out << "h10 " << dir << " " << m.h10 << "\n";
    };
    emit("object", report.object_dir);
    emit("subject", report.subject_dir);
    emit("average", report.average);
    return out.str();
}

}  // namespace stare
