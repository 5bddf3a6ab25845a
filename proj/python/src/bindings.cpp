#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

#include "notesearch/ann_index.hpp"
#include "notesearch/chunker.hpp"
#include "notesearch/embedding.hpp"
#include "notesearch/errors.hpp"
#include "notesearch/governance.hpp"
#include "notesearch/mcqa.hpp"
#include "notesearch/note_store.hpp"
#include "notesearch/query_engine.hpp"
#include "notesearch/stats.hpp"

namespace py = pybind11;
using namespace notesearch;
using nlohmann::json;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

json to_cpp(const py::handle& obj) {
  return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

std::vector<embedding::Embedding> rows(const FloatArray& a, std::size_t dimension) {
  if (a.ndim() != 2 || static_cast<std::size_t>(a.shape(1)) != dimension) {
    throw InvalidArgument("expected an (n, " + std::to_string(dimension) + ") float array");
  }
  std::vector<embedding::Embedding> out;
  out.reserve(a.shape(0));
  const float* p = a.data();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    out.push_back(embedding::l2_normalize({p + i * a.shape(1), dimension}));
  }
  return out;
}

embedding::Embedding one(const FloatArray& a, std::size_t dimension) {
  if (a.ndim() != 1 || static_cast<std::size_t>(a.shape(0)) != dimension) {
    throw InvalidArgument("expected a float vector of length " + std::to_string(dimension));
  }
  return embedding::l2_normalize({a.data(), dimension});
}

py::array_t<float> to_array(const embedding::Embedding& e) {
  py::array_t<float> out(static_cast<py::ssize_t>(e.dimension()));
  std::copy(e.values().begin(), e.values().end(), out.mutable_data());
  return out;
}

index::AttributeSet attributes_from_dict(const py::dict& d) {
  index::AttributeSet a;
  for (const auto& [key, value] : d) {
    const auto name = key.cast<std::string>();
    if (py::isinstance<py::str>(value)) {
      a.get(index::parse_categorical_field(name)) = value.cast<std::string>();
    } else {
      a.get(index::parse_numeric_field(name)) = value.cast<double>();
    }
  }
  return a;
}

chunking::ChunkingConfig chunking_config(std::size_t chunk_tokens, std::size_t overlap_tokens,
                                         std::size_t boundary_window_tokens) {
  chunking::ChunkingConfig c{chunk_tokens, overlap_tokens, boundary_window_tokens};
  c.validate();
  return c;
}

// Searches a saved index and note store through the governed query path.
class Engine {
 public:
  Engine(const std::filesystem::path& index_path, const std::filesystem::path& store_path, std::size_t dimension,
         const std::string& instruction) {
    embedding::EmbedderConfig ec;
    ec.dimension = dimension;
    ec.query_instruction = instruction;
    auto embedder =
        std::make_shared<embedding::Embedder>(std::make_shared<embedding::ReferenceProvider>(dimension), ec);
    index_ = std::shared_ptr<index::AnnIndex>(index::AnnIndex::load(index_path));
    auto store = std::make_shared<store::NoteStore>(std::make_unique<store::LogKvBackend>(store_path));
    audit_ = std::make_shared<query::AuditLog>();
    engine_ = std::make_unique<query::SearchEngine>(embedder, index_, store, audit_);
  }

  py::object search(const py::dict& request, const std::string& user, std::optional<std::vector<NoteId>> allowlist) {
    const auto req = query::search_request_from_json(to_cpp(request));
    const auto al = allow(allowlist);
    query::SearchResponse resp;
    {
      py::gil_scoped_release release;
      resp = engine_->execute_search(req, user, al);
    }
    return to_py(query::to_json(resp));
  }

  py::object search_more(const std::string& cursor, const std::string& user,
                         std::optional<std::vector<NoteId>> allowlist) {
    const auto al = allow(allowlist);
    query::SearchResponse resp;
    {
      py::gil_scoped_release release;
      resp = engine_->search_more(cursor, user, al);
    }
    return to_py(query::to_json(resp));
  }

  std::size_t index_size() const { return index_->size(); }
  std::size_t audit_count() const { return audit_->count(); }

 private:
  static query::Allowlist allow(const std::optional<std::vector<NoteId>>& ids) {
    if (!ids) return query::Allowlist::disabled();
    return query::Allowlist::enforced({ids->begin(), ids->end()});
  }

  std::shared_ptr<index::AnnIndex> index_;
  std::shared_ptr<query::AuditLog> audit_;
  std::unique_ptr<query::SearchEngine> engine_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Chunking, vector index, note store and statistics for clinical note search";

  // Translators registered later are tried first, so the base goes first.
  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<NotFound>(m, "NotFound", base.ptr());
  py::register_exception<UndefinedStatistic>(m, "UndefinedStatistic", base.ptr());

  // chunking
  m.def(
      "chunk_note",
      [](const std::string& text, NoteId note_id, std::size_t chunk_tokens, std::size_t overlap_tokens,
         std::size_t boundary_window_tokens) {
        py::list out;
        for (const auto& c : chunking::chunk_note(note_id, text,
                                                  chunking_config(chunk_tokens, overlap_tokens, boundary_window_tokens))) {
          py::dict d;
          d["note_id"] = c.note_id;
          d["chunk_ordinal"] = c.chunk_ordinal;
          d["text"] = c.text;
          d["first_token"] = c.first_token;
          d["last_token"] = c.last_token;
          d["char_start"] = c.char_start;
          d["char_end"] = c.char_end;
          out.append(d);
        }
        return out;
      },
      py::arg("text"), py::arg("note_id") = 0, py::arg("chunk_tokens") = 300, py::arg("overlap_tokens") = 50,
      py::arg("boundary_window_tokens") = 30);
  m.def(
      "count_chunks",
      [](std::size_t n_tokens, std::size_t chunk_tokens, std::size_t overlap_tokens) {
        return chunking::count_chunks(n_tokens, chunking_config(chunk_tokens, overlap_tokens, 0));
      },
      py::arg("n_tokens"), py::arg("chunk_tokens") = 300, py::arg("overlap_tokens") = 50);
  m.def(
      "tokenize",
      [](const std::string& text) {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (const auto& t : chunking::tokenize(text)) out.emplace_back(t.start_char, t.end_char);
        return out;
      },
      py::arg("text"));

  // embeddings and ids
  m.def(
      "reference_embed",
      [](const std::string& text, std::size_t dimension) { return to_array(embedding::reference_embed(text, dimension)); },
      py::arg("text"), py::arg("dimension"));
  m.def("make_chunk_id", &make_chunk_id, py::arg("note_id"), py::arg("ordinal"));
  m.def("make_row_key", &store::make_row_key, py::arg("note_id"));
  m.def("decode_row_key", &store::decode_row_key, py::arg("key"));

  // index
  py::class_<index::AnnIndex>(m, "AnnIndex")
      .def(py::init([](std::size_t dimension, std::uint32_t num_partitions, std::uint32_t nprobe, std::uint32_t spill,
                       std::uint32_t rescore_budget, const std::string& quantization) {
             index::IndexConfig c{num_partitions, nprobe, spill, rescore_budget,
                                  index::parse_quantization(quantization)};
             return std::make_unique<index::AnnIndex>(dimension, c);
           }),
           py::arg("dimension"), py::arg("num_partitions") = 256, py::arg("nprobe") = 32, py::arg("spill") = 2,
           py::arg("rescore_budget") = 200, py::arg("quantization") = "scalar8")
      .def_static(
          "load", [](const std::filesystem::path& path) { return index::AnnIndex::load(path); }, py::arg("path"))
      .def(
          "train",
          [](index::AnnIndex& self, const FloatArray& sample, std::uint64_t seed) {
            const auto vs = rows(sample, self.dimension());
            py::gil_scoped_release release;
            self.train(vs, seed);
          },
          py::arg("sample"), py::arg("seed"))
      .def(
          "insert",
          [](index::AnnIndex& self, const FloatArray& vectors, const std::vector<NoteId>& note_ids,
             std::optional<std::vector<ChunkId>> chunk_ids, std::optional<std::vector<py::dict>> attributes) {
            auto vs = rows(vectors, self.dimension());
            if (note_ids.size() != vs.size()) throw InvalidArgument("note_ids must match the number of vectors");
            if (chunk_ids && chunk_ids->size() != vs.size()) {
              throw InvalidArgument("chunk_ids must match the number of vectors");
            }
            if (attributes && attributes->size() != vs.size()) {
              throw InvalidArgument("attributes must match the number of vectors");
            }
            std::vector<index::VectorEntry> entries(vs.size());
            for (std::size_t i = 0; i < vs.size(); ++i) {
              entries[i].note_id = note_ids[i];
              entries[i].chunk_id = chunk_ids ? (*chunk_ids)[i] : make_chunk_id(note_ids[i], 0);
              entries[i].vector = std::move(vs[i]);
              if (attributes) entries[i].attributes = attributes_from_dict((*attributes)[i]);
            }
            py::gil_scoped_release release;
            return self.insert(entries).inserted;
          },
          py::arg("vectors"), py::arg("note_ids"), py::arg("chunk_ids") = py::none(),
          py::arg("attributes") = py::none())
      .def(
          "search",
          [](const index::AnnIndex& self, const FloatArray& query, std::size_t k, std::optional<py::dict> filter,
             std::optional<std::uint32_t> nprobe) {
            const auto q = one(query, self.dimension());
            const auto f = filter ? index::filter_from_json(to_cpp(*filter)) : index::FilterSpec{};
            index::SearchOverrides o;
            o.nprobe = nprobe;
            std::vector<index::Neighbor> hits;
            {
              py::gil_scoped_release release;
              hits = self.search(q, k, f, o);
            }
            std::vector<std::tuple<ChunkId, NoteId, double>> out;
            for (const auto& h : hits) out.emplace_back(h.chunk_id, h.note_id, h.score);
            return out;
          },
          py::arg("query"), py::arg("k"), py::arg("filter") = py::none(), py::arg("nprobe") = py::none())
      .def("save", &index::AnnIndex::save, py::arg("path"))
      .def("vocabulary", [](const index::AnnIndex& self) { return to_py(index::to_json(self.vocabulary())); })
      .def("config", [](const index::AnnIndex& self) { return to_py(index::to_json(self.config())); })
      .def_property_readonly("dimension", &index::AnnIndex::dimension)
      .def_property_readonly("trained", &index::AnnIndex::trained)
      .def_property_readonly("generation", &index::AnnIndex::generation)
      .def("__len__", &index::AnnIndex::size)
      .def("__contains__", &index::AnnIndex::contains);

  // note store
  py::class_<store::NoteStore>(m, "NoteStore")
      .def(py::init([](const std::filesystem::path& path) {
             return std::make_unique<store::NoteStore>(std::make_unique<store::LogKvBackend>(path));
           }),
           py::arg("path"))
      .def(
          "put_notes",
          [](store::NoteStore& self, const py::list& notes) {
            std::vector<store::NoteRecord> records;
            for (const auto& n : notes) records.push_back(to_cpp(n).get<store::NoteRecord>());
            return self.put_notes(records);
          },
          py::arg("notes"))
      .def(
          "get_note",
          [](const store::NoteStore& self, NoteId id) -> py::object {
            const auto r = self.get_note(id);
            if (!r) return py::none();
            return to_py(json(*r));
          },
          py::arg("note_id"))
      .def("__len__", &store::NoteStore::size);

  py::class_<Engine>(m, "Engine")
      .def(py::init<const std::filesystem::path&, const std::filesystem::path&, std::size_t, const std::string&>(),
           py::arg("index_path"), py::arg("store_path"), py::arg("dimension"),
           py::arg("instruction") = embedding::EmbedderConfig::kDefaultInstruction)
      .def("search", &Engine::search, py::arg("request"), py::arg("user"), py::arg("allowlist") = py::none())
      .def("search_more", &Engine::search_more, py::arg("cursor"), py::arg("user"), py::arg("allowlist") = py::none())
      .def_property_readonly("index_size", &Engine::index_size)
      .def_property_readonly("audit_count", &Engine::audit_count);

  // statistics
  m.def("cohens_kappa", [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
    return stats::cohens_kappa(a, b);
  });
  m.def("fleiss_kappa", &stats::fleiss_kappa, py::arg("ratings"));
  m.def("krippendorff_alpha_interval", &stats::krippendorff_alpha_interval, py::arg("ratings"));
  m.def(
      "mann_whitney_u",
      [](const std::vector<double>& a, const std::vector<double>& b, const std::string& method) {
        auto mode = stats::MwMethod::kAuto;
        if (method == "exact") {
          mode = stats::MwMethod::kExact;
        } else if (method == "normal") {
          mode = stats::MwMethod::kNormal;
        } else if (method != "auto") {
          throw InvalidArgument("method must be auto, exact or normal");
        }
        const auto r = stats::mann_whitney_u(a, b, mode);
        return py::make_tuple(r.u, r.p_value, r.method == stats::MwMethod::kExact ? "exact" : "normal");
      },
      py::arg("a"), py::arg("b"), py::arg("method") = "auto");
  m.def(
      "wilson_ci",
      [](std::size_t successes, std::size_t trials, double z) {
        const auto i = eval::wilson_ci(successes, trials, z);
        return std::make_pair(i.low, i.high);
      },
      py::arg("successes"), py::arg("trials"), py::arg("z") = 1.96);
  m.def("majority_vote", [](const std::vector<int>& votes) { return eval::majority_vote(votes); }, py::arg("votes"));
}
