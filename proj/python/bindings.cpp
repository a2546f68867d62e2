#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "medex/errors.hpp"
#include "medex/fewshot.hpp"
#include "medex/model.hpp"
#include "medex/training.hpp"

namespace py = pybind11;
using namespace medex;

namespace {

Tensor matrix_from(const std::vector<std::vector<double>>& rows) {
  if (rows.empty() || rows.front().empty()) throw ShapeError("expected a nonempty matrix");
  std::vector<double> flat;
  for (const auto& r : rows) {
    if (r.size() != rows.front().size()) throw ShapeError("ragged matrix");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), rows.front().size()}, std::move(flat));
}

Tensor vector_from(const std::vector<double>& v) { return Tensor::vector(v); }

py::dict report_dict(const EvalReport& r) {
  auto counts = [](const PrfCounts& c) {
    py::dict d;
    d["tp"] = c.tp;
    d["fp"] = c.fp;
    d["fn"] = c.fn;
    d["precision"] = c.precision();
    d["recall"] = c.recall();
    d["f1"] = c.f1();
    return d;
  };
  py::dict out;
  out["micro"] = counts(r.micro);
  out["macro_f1"] = r.macro_f1();
  py::dict per;
  for (const auto& [name, c] : r.per_class) per[py::str(name)] = counts(c);
  out["per_class"] = per;
  if (r.token_accuracy) out["token_accuracy"] = *r.token_accuracy;
  if (r.invalid_transition_rate) out["invalid_transition_rate"] = *r.invalid_transition_rate;
  return out;
}

std::vector<EntitySpan> spans_from(const std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>& t) {
  std::vector<EntitySpan> out;
  for (const auto& [s, e, c] : t) out.push_back({s, e, c});
  return out;
}

std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> spans_to(const std::vector<EntitySpan>& spans) {
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> out;
  for (const auto& s : spans) out.emplace_back(s.start, s.end, s.cls);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Medical NER and relation extraction core";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);

  py::enum_<Split>(m, "Split")
      .value("train", Split::train)
      .value("validation", Split::validation)
      .value("test", Split::test);

  py::class_<TagScheme>(m, "TagScheme")
      .def(py::init<std::vector<std::string>>())
      .def_static("disease_default", &TagScheme::disease_default)
      .def_property_readonly("classes", &TagScheme::classes)
      .def_property_readonly("num_tags", &TagScheme::num_tags)
      .def("tag_name", &TagScheme::tag_name)
      .def("tag_index", &TagScheme::tag_index);

  py::class_<Sentence>(m, "Sentence")
      .def_property_readonly("tokens",
                             [](const Sentence& s) {
                               std::vector<std::string> out;
                               for (const auto& t : s.tokens) out.push_back(t.surface);
                               return out;
                             })
      .def_readonly("tags", &Sentence::tags)
      .def_property_readonly("spans", [](const Sentence& s) { return spans_to(s.spans); })
      .def_property_readonly("relations", [](const Sentence& s) {
        std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> out;
        for (const auto& r : s.relations) out.emplace_back(r.head, r.tail, r.label);
        return out;
      });

  py::class_<Corpus>(m, "Corpus")
      .def("__len__", &Corpus::size)
      .def_readonly("scheme", &Corpus::scheme)
      .def_readonly("relation_labels", &Corpus::relation_labels)
      .def_readonly("sentences", &Corpus::sentences)
      .def("indices", &Corpus::indices)
      .def("to_conll", [](const Corpus& c) { return format_conll(c.sentences, c.scheme); })
      .def("save", [](const Corpus& c, const std::filesystem::path& dir) { save_corpus_dir(c, dir); });

  m.def("generate_synthetic_corpus", &generate_synthetic_corpus, py::arg("size"), py::arg("seed"));
  m.def("load_corpus", [](const std::filesystem::path& dir) {
    return load_corpus_dir(dir, TagScheme::disease_default());
  });

  py::class_<Vocab>(m, "Vocab")
      .def("__len__", &Vocab::size)
      .def_property_readonly("entries", &Vocab::entries)
      .def("tokenize", [](const Vocab& v, const std::string& surface) {
        return tokenize_subword(surface, v);
      });
  m.def("build_vocab", &build_vocab, py::arg("corpus"), py::arg("min_freq") = 2);

  m.def(
      "tags_to_spans",
      [](const std::vector<TagIndex>& tags, const TagScheme& scheme, bool repair) {
        return spans_to(tags_to_spans(tags, scheme, repair ? BioMode::repair : BioMode::strict));
      },
      py::arg("tags"), py::arg("scheme"), py::arg("repair") = false);
  m.def(
      "spans_to_tags",
      [](const std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>& spans, std::size_t n,
         const TagScheme& scheme) { return spans_to_tags(spans_from(spans), n, scheme); },
      py::arg("spans"), py::arg("n"), py::arg("scheme"));

  m.def("f1_from_pr", &f1_from_pr, py::arg("precision"), py::arg("recall"));
  m.def(
      "entity_prf",
      [](const std::vector<std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>>& gold,
         const std::vector<std::vector<std::tuple<std::size_t, std::size_t, std::size_t>>>& pred,
         const std::vector<std::string>& classes) {
        std::vector<std::vector<EntitySpan>> g, p;
        for (const auto& s : gold) g.push_back(spans_from(s));
        for (const auto& s : pred) p.push_back(spans_from(s));
        return report_dict(entity_prf(g, p, classes));
      },
      py::arg("gold"), py::arg("pred"), py::arg("classes"));

  m.def(
      "crf_log_partition",
      [](const std::vector<std::vector<double>>& e, const std::vector<std::vector<double>>& t,
         const std::vector<double>& start, const std::vector<double>& stop) {
        return log_partition(matrix_from(e), matrix_from(t), vector_from(start), vector_from(stop))
            .item();
      },
      py::arg("emissions"), py::arg("transitions"), py::arg("start"), py::arg("stop"));
  m.def(
      "crf_viterbi",
      [](const std::vector<std::vector<double>>& e, const std::vector<std::vector<double>>& t,
         const std::vector<double>& start, const std::vector<double>& stop) {
        auto d = viterbi(matrix_from(e), matrix_from(t), vector_from(start), vector_from(stop));
        return py::make_tuple(d.tags, d.score);
      },
      py::arg("emissions"), py::arg("transitions"), py::arg("start"), py::arg("stop"));
  m.def(
      "crf_brute_force",
      [](const std::vector<std::vector<double>>& e, const std::vector<std::vector<double>>& t,
         const std::vector<double>& start, const std::vector<double>& stop) {
        auto o = brute_force_oracle(matrix_from(e), matrix_from(t), vector_from(start),
                                    vector_from(stop));
        return py::make_tuple(o.log_partition, o.best, o.best_score);
      },
      py::arg("emissions"), py::arg("transitions"), py::arg("start"), py::arg("stop"));

  py::class_<EncoderConfig>(m, "EncoderConfig")
      .def(py::init<>())
      .def_readwrite("d_model", &EncoderConfig::d_model)
      .def_readwrite("heads", &EncoderConfig::heads)
      .def_readwrite("layers", &EncoderConfig::layers)
      .def_readwrite("d_ff", &EncoderConfig::d_ff)
      .def_readwrite("max_len", &EncoderConfig::max_len)
      .def_readwrite("dropout_rate", &EncoderConfig::dropout_rate)
      .def_readonly("vocab_size", &EncoderConfig::vocab_size);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("steps", &TrainConfig::steps)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("lambda_re", &TrainConfig::lambda_re)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("class_balanced", &TrainConfig::class_balanced)
      .def_readwrite("clip_norm", &TrainConfig::clip_norm)
      .def_property(
          "head", [](const TrainConfig& c) { return std::string(head_name(c.head)); },
          [](TrainConfig& c, const std::string& name) {
            auto h = parse_head(name);
            if (!h) throw ValidationError("unknown head " + name);
            c.head = *h;
          });

  py::class_<PretrainConfig>(m, "PretrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &PretrainConfig::learning_rate)
      .def_readwrite("steps", &PretrainConfig::steps)
      .def_readwrite("batch_size", &PretrainConfig::batch_size)
      .def_readwrite("mask_prob", &PretrainConfig::mask_prob)
      .def_readwrite("seed", &PretrainConfig::seed);

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("step", &Checkpoint::step)
      .def_readonly("seed_lineage", &Checkpoint::seed_lineage)
      .def_property_readonly("head", [](const Checkpoint& c) { return std::string(head_name(c.model.head)); })
      .def_property_readonly("vocab", [](const Checkpoint& c) { return c.model.vocab; })
      .def_property_readonly("encoder_config", [](const Checkpoint& c) { return c.model.encoder_config; })
      .def("parameter", [](const Checkpoint& c, const std::string& name) {
        for (const auto& [n, t] : c.model.named()) {
          if (n == name) return std::vector<double>(t.values().begin(), t.values().end());
        }
        throw py::key_error(name);
      })
      .def_property_readonly("parameter_names", [](const Checkpoint& c) {
        std::vector<std::string> out;
        for (const auto& [n, t] : c.model.named()) out.push_back(n);
        return out;
      })
      .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(c, p); })
      .def("to_json", &serialize_checkpoint);

  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  m.def(
      "new_model",
      [](const Corpus& corpus, const EncoderConfig& config, const std::string& head,
         std::size_t min_freq, std::uint64_t seed) {
        auto h = parse_head(head);
        if (!h) throw ValidationError("unknown head " + head);
        const auto ids = corpus.indices(Split::train);
        Checkpoint c;
        c.model = make_model(build_vocab(corpus.subset(ids, Split::train), min_freq), config, *h,
                             {}, corpus.scheme, corpus.relation_labels, seed);
        c.seed_lineage = {seed};
        return c;
      },
      py::arg("corpus"), py::arg("config") = EncoderConfig{}, py::arg("head") = "none",
      py::arg("min_freq") = 2, py::arg("seed") = 0);

  m.def(
      "pretrain",
      [](const Corpus& corpus, const Checkpoint& init, const PretrainConfig& config) {
        py::gil_scoped_release release;
        std::vector<LossRow> log;
        auto out = pretrain(corpus, init, config, &log);
        std::vector<double> losses;
        for (const auto& r : log) losses.push_back(r.loss);
        return std::make_pair(out, losses);
      },
      py::arg("corpus"), py::arg("init"), py::arg("config") = PretrainConfig{});

  m.def(
      "train",
      [](const Corpus& corpus, const Checkpoint& init, const TrainConfig& config) {
        py::gil_scoped_release release;
        std::vector<LossRow> log;
        auto out = train(corpus, init, config, &log);
        std::vector<double> losses;
        for (const auto& r : log) losses.push_back(r.loss);
        return std::make_pair(out, losses);
      },
      py::arg("corpus"), py::arg("init"), py::arg("config") = TrainConfig{});

  m.def(
      "evaluate",
      [](const Checkpoint& c, const Corpus& corpus, Split split) {
        const Evaluation ev = evaluate(c.model, corpus, split);
        py::dict out;
        out["entities"] = report_dict(ev.entities);
        out["relations"] = report_dict(ev.relations);
        out["relations_gold_spans"] = report_dict(ev.relations_gold);
        return out;
      },
      py::arg("checkpoint"), py::arg("corpus"), py::arg("split") = Split::test);

  m.def(
      "predict",
      [](const Checkpoint& c, const std::vector<std::string>& tokens) {
        Sentence s;
        for (const auto& t : tokens) s.tokens.push_back({t, {}});
        tokenize(s, c.model.vocab);
        const Prediction p = predict(c.model, s);
        py::dict out;
        out["tags"] = p.tags;
        out["spans"] = spans_to(p.spans);
        std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> rel;
        for (const auto& r : p.relations) rel.emplace_back(r.head, r.tail, r.label);
        out["relations"] = rel;
        return out;
      },
      py::arg("checkpoint"), py::arg("tokens"));

  m.def(
      "sample_k_shot",
      [](const Corpus& corpus, std::size_t k, std::uint64_t seed) {
        const Episode ep = sample_k_shot(corpus, k, seed);
        return py::make_tuple(ep.support, ep.coverage, ep.feasible);
      },
      py::arg("corpus"), py::arg("k"), py::arg("seed"));
}
