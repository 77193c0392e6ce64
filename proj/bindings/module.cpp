#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "stare/config.hpp"
#include "stare/evaluation.hpp"
#include "stare/graph.hpp"
#include "stare/model.hpp"
#include "stare/pipeline.hpp"
#include "stare/training.hpp"

namespace py = pybind11;
using namespace stare;

namespace {

// Statements cross the boundary as (s, r, o, [(qr, qv), ...]) tuples; the
// qualifier list may be omitted.
RawStatement raw_from_tuple(const py::handle& obj) {
    auto t = obj.cast<py::tuple>();
    if (t.size() != 3 && t.size() != 4)
        throw py::value_error("statement must be (s, r, o) or (s, r, o, qualifiers)");
    RawStatement s;
    s.subject = t[0].cast<std::string>();
    s.relation = t[1].cast<std::string>();
    s.object = t[2].cast<std::string>();
    if (t.size() == 4)
        for (const auto& q : t[3].cast<py::sequence>()) {
            auto pair = q.cast<py::tuple>();
            s.qualifiers.emplace_back(pair[0].cast<std::string>(),
                                      pair[1].cast<std::string>());
        }
    return s;
}

std::vector<RawStatement> raw_list(const py::sequence& seq) {
    std::vector<RawStatement> out;
    out.reserve(py::len(seq));
    for (const auto& item : seq) out.push_back(raw_from_tuple(item));
    return out;
}

py::tuple raw_to_tuple(const RawStatement& s) {
    py::list quals;
    for (const auto& [qr, qv] : s.qualifiers) quals.append(py::make_tuple(qr, qv));
    return py::make_tuple(s.subject, s.relation, s.object, quals);
}

py::list raw_to_list(const std::vector<RawStatement>& stmts) {
    py::list out;
    for (const auto& s : stmts) out.append(raw_to_tuple(s));
    return out;
}

ModelConfig config_from_dict(const py::dict& overrides) {
    RunConfig run;
    for (const auto& [key, value] : overrides)
        run.apply(py::str(key).cast<std::string>(), py::str(value).cast<std::string>());
    return run.model;
}

py::dict metrics_dict(const Metrics& m) {
    py::dict d;
    d["mrr"] = m.mrr;
    d["h1"] = m.h1;
    d["h5"] = m.h5;
    d["h10"] = m.h10;
    d["count"] = m.count;
    return d;
}

py::dict stats_dict(const DatasetStats& s) {
    py::dict d;
    d["statements"] = s.statements;
    d["with_qualifiers"] = s.with_qualifiers;
    d["with_qualifiers_pct"] = s.with_qualifiers_pct;
    d["entities"] = s.entities;
    d["relations"] = s.relations;
    d["entities_only_in_qualifiers"] = s.entities_only_in_qualifiers;
    d["relations_only_in_qualifiers"] = s.relations_only_in_qualifiers;
    d["train"] = s.train_size;
    d["valid"] = s.valid_size;
    d["test"] = s.test_size;
    d["qualifier_histogram"] = s.qualifier_histogram;
    d["indegree_histogram"] = s.indegree_histogram;
    d["leakage"] = s.leakage;
    d["inverse_leakage"] = s.inverse_leakage;
    return d;
}

// Owns the dataset, vocabulary, model and training state behind one handle.
class PyModel {
public:
    PyModel(const py::sequence& train, const py::sequence& valid, const py::sequence& test,
            const py::dict& config)
        : raw_train_(raw_list(train)), raw_valid_(raw_list(valid)), raw_test_(raw_list(test)) {
        std::vector<RawStatement> all = raw_train_;
        all.insert(all.end(), raw_valid_.begin(), raw_valid_.end());
        all.insert(all.end(), raw_test_.begin(), raw_test_.end());
        base_vocab_ = build_vocabulary(all);
        train_ids_ = encode_statements(raw_train_, base_vocab_);
        valid_ids_ = encode_statements(raw_valid_, base_vocab_);
        test_ids_ = encode_statements(raw_test_, base_vocab_);
        model_.emplace(train_ids_, base_vocab_, config_from_dict(config));
    }

    py::list fit(std::size_t epochs, std::size_t batch_size, double learning_rate,
                 double label_smoothing, std::uint64_t seed) {
        TrainConfig tc;
        tc.epochs = epochs;
        tc.batch_size = batch_size;
        tc.learning_rate = learning_rate;
        tc.label_smoothing = label_smoothing;
        tc.seed = seed;
        auto history = train(*model_, tc);
        py::list out;
        for (const auto& e : history) out.append(py::make_tuple(e.epoch, e.mean_loss, e.seconds));
        return out;
    }

    py::dict evaluate(const std::string& split) {
        const std::vector<Statement>* eval_set = nullptr;
        if (split == "train")
            eval_set = &train_ids_;
        else if (split == "valid")
            eval_set = &valid_ids_;
        else if (split == "test")
            eval_set = &test_ids_;
        else
            throw py::value_error("split must be train|valid|test");
        auto f_train = model_->filter_statements(train_ids_);
        auto f_valid = model_->filter_statements(valid_ids_);
        auto f_test = model_->filter_statements(test_ids_);
        FilterIndex filter =
            build_filter_index({&f_train, &f_valid, &f_test}, model_->vocab);
        RankReport report = evaluate_model(*model_, *eval_set, filter);
        py::dict d;
        d["object"] = metrics_dict(report.object_dir);
        d["subject"] = metrics_dict(report.subject_dir);
        d["average"] = metrics_dict(report.average);
        return d;
    }

    py::list score(const py::handle& statement) {
        Statement s = encode_statements({raw_from_tuple(statement)}, model_->vocab)[0];
        Tensor scores = model_->score({model_->query_for(s)});
        py::list out;
        for (std::size_t j = 0; j < model_->num_entities(); ++j)
            out.append(scores.at(0, j));
        return out;
    }

    py::dict gradcheck(std::size_t batch, double step) {
        LabelIndex index(model_->augmented, 2 * model_->num_base_facts);
        auto queries = model_->training_queries();
        if (queries.size() > batch) queries.resize(batch);
        GradCheckReport report = grad_check(*model_, queries, index, 0.1, step);
        py::dict d;
        for (const auto& e : report.entries) d[py::str(e.name)] = e.max_rel_err;
        d["worst"] = report.worst;
        return d;
    }

    void save(const std::string& path) const { save_params(path, model_->params); }

    void load(const std::string& path) {
        ParamMap loaded = load_params(path);
        for (const auto& [name, tensor] : model_->params) {
            auto it = loaded.find(name);
            if (it == loaded.end())
                throw Error("checkpoint is missing parameter " + name);
            if (!it->second.same_shape(tensor))
                throw Error("checkpoint shape mismatch for " + name);
        }
        model_->params = std::move(loaded);
        model_->invalidate_cache();
    }

    std::size_t num_entities() const { return model_->vocab.num_entities(); }
    std::size_t num_relations() const { return model_->vocab.num_relations(); }
    std::string entity_label(EntityId id) const { return model_->vocab.entity_label(id); }

private:
    std::vector<RawStatement> raw_train_, raw_valid_, raw_test_;
    Vocabulary base_vocab_;
    std::vector<Statement> train_ids_, valid_ids_, test_ids_;
    std::optional<LinkPredictionModel> model_;
};

}  // namespace

PYBIND11_MODULE(_stare, m) {
    m.doc() = "message-passing link prediction over hyper-relational knowledge graphs";
    m.attr("__version__") = "0.1.0";

    py::register_exception<ConfigError>(m, "ConfigurationError");
    py::register_exception<ParseError>(m, "StatementParseError");

    // Statement file IO.
    m.def("parse_statements",
          [](const std::string& path) { return raw_to_list(parse_statements(path)); },
          py::arg("path"));
    m.def("write_statements",
          [](const std::string& path, const py::sequence& stmts, bool sort_canonical) {
              write_statements(path, raw_list(stmts), sort_canonical);
          },
          py::arg("path"), py::arg("statements"), py::arg("sort_canonical") = true);

    // Composition kernels.
    m.def("phi",
          [](const std::vector<double>& e, const std::vector<double>& r,
             const std::string& kind) { return phi(e, r, phi_kind_from_string(kind)); },
          py::arg("entity"), py::arg("relation"), py::arg("kind"));
    m.def("gamma",
          [](const std::vector<double>& hr, const std::vector<double>& hq,
             const std::string& kind, double alpha) {
              return gamma(hr, hq, gamma_kind_from_string(kind), alpha);
          },
          py::arg("relation"), py::arg("qualifier"), py::arg("kind"), py::arg("alpha") = 0.8);
    m.def("phi_backward",
          [](const std::vector<double>& e, const std::vector<double>& r,
             const std::string& kind, const std::vector<double>& upstream) {
              std::vector<double> ge, gr;
              phi_backward(e, r, phi_kind_from_string(kind), upstream, ge, gr);
              return py::make_tuple(ge, gr);
          },
          py::arg("entity"), py::arg("relation"), py::arg("kind"), py::arg("upstream"));

    // Dataset pipeline.
    m.def("strip_literals",
          [](const py::sequence& stmts, const std::string& mode, const std::string& pattern) {
              LiteralDetector detector =
                  pattern.empty() ? LiteralDetector() : LiteralDetector(pattern);
              LiteralMode lm = mode == "drop_statement" ? LiteralMode::DropStatement
                                                        : LiteralMode::DropQualifier;
              return raw_to_list(strip_literal_statements(raw_list(stmts), detector, lm));
          },
          py::arg("statements"), py::arg("mode") = "drop_statement", py::arg("pattern") = "");
    m.def("clean_split",
          [](const py::sequence& train, const py::sequence& valid, const py::sequence& test) {
              Split split{raw_list(train), raw_list(valid), raw_list(test)};
              LeakageReport leak = remove_leakage(split);
              UnseenReport unseen = filter_unseen(split);
              py::dict d;
              d["train"] = raw_to_list(split.train);
              d["valid"] = raw_to_list(split.valid);
              d["test"] = raw_to_list(split.test);
              d["removed_leaked"] = leak.removed_from_train + leak.removed_from_valid;
              d["removed_unseen"] = unseen.removed_from_test;
              return d;
          },
          py::arg("train"), py::arg("valid"), py::arg("test"));
    m.def("sample_by_qualifier_ratio",
          [](const py::sequence& stmts, double ratio, std::uint64_t seed) {
              return raw_to_list(sample_by_qualifier_ratio(raw_list(stmts), ratio, seed));
          },
          py::arg("statements"), py::arg("ratio"), py::arg("seed") = 42);
    m.def("truncate_qualifiers",
          [](const py::sequence& stmts, std::size_t n, std::uint64_t seed) {
              return raw_to_list(truncate_qualifiers(raw_list(stmts), n, seed));
          },
          py::arg("statements"), py::arg("n"), py::arg("seed") = 42);
    m.def("reduce_to_triples",
          [](const py::sequence& stmts) { return raw_to_list(reduce_to_triples(raw_list(stmts))); },
          py::arg("statements"));
    m.def("dataset_stats",
          [](const py::sequence& train, const py::sequence& valid, const py::sequence& test) {
              Split split{raw_list(train), raw_list(valid), raw_list(test)};
              return stats_dict(compute_stats(split));
          },
          py::arg("train"), py::arg("valid") = py::list(), py::arg("test") = py::list());

    // Ranking.
    m.def("filtered_rank",
          [](const std::vector<double>& scores, EntityId gold,
             const std::vector<EntityId>& filter_set) {
              std::vector<EntityId> sorted = filter_set;
              std::sort(sorted.begin(), sorted.end());
              return filtered_rank(scores, gold, sorted,
                                   std::vector<std::uint8_t>(scores.size(), 1));
          },
          py::arg("scores"), py::arg("gold"), py::arg("filter_set") = std::vector<EntityId>{});
    m.def("compute_metrics", [](const std::vector<double>& ranks) {
        return metrics_dict(compute_metrics(ranks));
    });

    py::class_<PyModel>(m, "Model")
        .def(py::init<const py::sequence&, const py::sequence&, const py::sequence&,
                      const py::dict&>(),
             py::arg("train"), py::arg("valid") = py::list(), py::arg("test") = py::list(),
             py::arg("config") = py::dict())
        .def("fit", &PyModel::fit, py::arg("epochs") = 10, py::arg("batch_size") = 128,
             py::arg("learning_rate") = 1e-3, py::arg("label_smoothing") = 0.1,
             py::arg("seed") = 42)
        .def("evaluate", &PyModel::evaluate, py::arg("split") = "test")
        .def("score", &PyModel::score, py::arg("statement"))
        .def("gradcheck", &PyModel::gradcheck, py::arg("batch") = 8, py::arg("step") = 1e-5)
        .def("save", &PyModel::save, py::arg("path"))
        .def("load", &PyModel::load, py::arg("path"))
        .def_property_readonly("num_entities", &PyModel::num_entities)
        .def_property_readonly("num_relations", &PyModel::num_relations)
        .def("entity_label", &PyModel::entity_label, py::arg("id"));
}
