#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <pthread.h>
#include <string>
#include <vector>

#include "notesearch/ann_index.hpp"
#include "notesearch/embedding.hpp"
#include "notesearch/errors.hpp"
#include "notesearch/governance.hpp"
#include "notesearch/http_embedding.hpp"
#include "notesearch/ingest.hpp"
#include "notesearch/latency_bench.hpp"
#include "notesearch/mcqa.hpp"
#include "notesearch/note_store.hpp"
#include "notesearch/query_engine.hpp"
#include "notesearch/service.hpp"
#include "notesearch/stats.hpp"
#include "plot.hpp"

namespace fs = std::filesystem;
using namespace notesearch;
using nlohmann::json;

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : std::move(fallback);
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw StorageError("cannot write " + path.string());
    out << j.dump(2) << "\n";
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open " + path.string());
  return json::parse(in);
}

// ---- deployment layout ------------------------------------------------------
//   <data>/deployment.json   embedding + chunking settings
//   <data>/index.idx         vector index
//   <data>/notes.log         note store
//   <data>/work/             ingest work products
//   <data>/workspaces/       cohort workspaces
//   <data>/audit.jsonl       default audit trail

struct EmbeddingSettings {
  std::string provider = "reference";
  std::size_t dimension = 256;
  std::string host = "127.0.0.1";
  int port = 8081;
  std::string path = "/v1/embed";
  std::string instruction = embedding::EmbedderConfig::kDefaultInstruction;
};

struct Deployment {
  EmbeddingSettings embedding;
  chunking::ChunkingConfig chunking;
};

json to_json(const Deployment& d) {
  return {{"schema_version", 1},
          {"embedding",
           {{"provider", d.embedding.provider},
            {"dimension", d.embedding.dimension},
            {"host", d.embedding.host},
            {"port", d.embedding.port},
            {"path", d.embedding.path},
            {"query_instruction", d.embedding.instruction}}},
          {"chunking",
           {{"chunk_tokens", d.chunking.chunk_tokens},
            {"overlap_tokens", d.chunking.overlap_tokens},
            {"boundary_window_tokens", d.chunking.boundary_window_tokens}}}};
}

Deployment deployment_from_json(const json& j) {
  Deployment d;
  const auto& e = j.at("embedding");
  d.embedding.provider = e.at("provider").get<std::string>();
  d.embedding.dimension = e.at("dimension").get<std::size_t>();
  d.embedding.host = e.value("host", d.embedding.host);
  d.embedding.port = e.value("port", d.embedding.port);
  d.embedding.path = e.value("path", d.embedding.path);
  d.embedding.instruction = e.value("query_instruction", d.embedding.instruction);
  const auto& c = j.at("chunking");
  d.chunking.chunk_tokens = c.at("chunk_tokens").get<std::size_t>();
  d.chunking.overlap_tokens = c.at("overlap_tokens").get<std::size_t>();
  d.chunking.boundary_window_tokens = c.at("boundary_window_tokens").get<std::size_t>();
  d.chunking.validate();
  return d;
}

std::shared_ptr<embedding::Embedder> make_embedder(const EmbeddingSettings& s) {
  std::shared_ptr<embedding::EmbeddingProvider> provider;
  embedding::EmbedderConfig cfg;
  cfg.dimension = s.dimension;
  cfg.query_instruction = s.instruction;
  if (s.provider == "reference") {
    provider = std::make_shared<embedding::ReferenceProvider>(s.dimension);
  } else if (s.provider == "http") {
    embedding::HttpProvider::Options o;
    o.host = s.host;
    o.port = s.port;
    o.path = s.path;
    o.dimension = s.dimension;
    provider = std::make_shared<embedding::HttpProvider>(o);
  } else {
    throw InvalidArgument("unknown embedding provider: " + s.provider);
  }
  cfg.provider_id = provider->id();
  return std::make_shared<embedding::Embedder>(provider, cfg);
}

struct DataDir {
  fs::path root;
  fs::path deployment() const { return root / "deployment.json"; }
  fs::path index() const { return root / "index.idx"; }
  fs::path notes() const { return root / "notes.log"; }
  fs::path work() const { return root / "work"; }
  fs::path workspaces() const { return root / "workspaces"; }
  fs::path audit() const { return root / "audit.jsonl"; }

  Deployment load_deployment() const { return deployment_from_json(read_json(deployment())); }
  std::shared_ptr<store::NoteStore> open_store() const {
    fs::create_directories(root);
    return std::make_shared<store::NoteStore>(std::make_unique<store::LogKvBackend>(notes()));
  }
};

std::vector<std::size_t> parse_sizes(const std::vector<std::size_t>& v, const char* what) {
  if (v.empty()) throw InvalidArgument(std::string(what) + " needs at least one value");
  return v;
}

// ---- subcommands ------------------------------------------------------------

struct Common {
  std::string data_dir = env_or("NOTESEARCH_DATA_DIR", "data");
  DataDir dir() const { return {data_dir}; }
};

struct IndexFlags {
  std::uint32_t partitions = 256;
  std::uint32_t nprobe = 32;
  std::uint32_t spill = 2;
  std::uint32_t rescore = 200;
  std::string quantization = "scalar8";
  std::uint64_t seed = 1;
  std::size_t sample = 50000;
  EmbeddingSettings embedding;
  chunking::ChunkingConfig chunking;

  void add(CLI::App* cmd) {
    cmd->add_option("--partitions", partitions, "Number of index partitions")->capture_default_str();
    cmd->add_option("--nprobe", nprobe, "Partitions probed per query")->capture_default_str();
    cmd->add_option("--spill", spill, "Partitions per vector (1 or 2)")->capture_default_str();
    cmd->add_option("--rescore-budget", rescore, "Candidates rescored at full precision")->capture_default_str();
    cmd->add_option("--quantization", quantization, "scalar8 or none")->capture_default_str();
    cmd->add_option("--seed", seed, "Training seed")->capture_default_str();
    cmd->add_option("--sample", sample, "Chunks sampled for training")->capture_default_str();
    cmd->add_option("--embedding-provider", embedding.provider, "reference or http")->capture_default_str();
    cmd->add_option("--dimension", embedding.dimension, "Embedding dimension")->capture_default_str();
    cmd->add_option("--embed-host", embedding.host, "Embedding service host");
    cmd->add_option("--embed-port", embedding.port, "Embedding service port");
    cmd->add_option("--embed-path", embedding.path, "Embedding service path");
    cmd->add_option("--chunk-tokens", chunking.chunk_tokens)->capture_default_str();
    cmd->add_option("--overlap-tokens", chunking.overlap_tokens)->capture_default_str();
    cmd->add_option("--boundary-window", chunking.boundary_window_tokens)->capture_default_str();
  }

  index::IndexConfig config() const {
    index::IndexConfig c;
    c.num_partitions = partitions;
    c.nprobe = std::min(nprobe, partitions);
    c.spill = spill;
    c.rescore_budget = rescore;
    c.quantization = index::parse_quantization(quantization);
    c.validate();
    return c;
  }
};

std::unique_ptr<index::AnnIndex> train(const Common& common, const IndexFlags& flags, const std::string& notes_path) {
  chunking::ChunkingConfig chunking = flags.chunking;
  chunking.validate();
  const Deployment deployment{flags.embedding, chunking};
  const auto embedder = make_embedder(deployment.embedding);
  const auto notes = store::read_notes_jsonl(notes_path);
  auto idx = std::make_unique<index::AnnIndex>(flags.embedding.dimension, flags.config());
  ingest::train_index_from_notes(*idx, *embedder, notes, chunking, flags.sample, flags.seed);
  const auto dir = common.dir();
  fs::create_directories(dir.root);
  write_json(dir.deployment(), to_json(deployment));
  return idx;
}

json ingest_notes(const DataDir& dir, const std::string& notes_path, const std::vector<std::string>& excluded_categories,
                  bool incremental) {
  const auto deployment = dir.load_deployment();
  auto idx = std::shared_ptr<index::AnnIndex>(index::AnnIndex::load(dir.index()));
  auto store = dir.open_store();
  ingest::PipelineConfig pc;
  pc.work_dir = dir.work();
  pc.chunking = deployment.chunking;
  ingest::Pipeline pipeline(make_embedder(deployment.embedding), idx, store, pc);
  if (!excluded_categories.empty()) {
    pipeline.set_exclusion([excluded_categories](const store::NoteRecord& n) {
      return std::find(excluded_categories.begin(), excluded_categories.end(), n.note_category) !=
             excluded_categories.end();
    });
  }
  const auto notes = store::read_notes_jsonl(notes_path);
  json report{{"schema_version", 1}, {"report", "ingest"}};
  if (incremental) {
    report["update"] = ingest::to_json(pipeline.incremental_update(notes));
  } else {
    json parts = json::array();
    for (const auto& m : pipeline.run_all(notes)) parts.push_back(ingest::to_json(m));
    report["partitions"] = std::move(parts);
  }
  idx->save(dir.index());
  report["index_size"] = idx->size();
  report["index_generation"] = idx->generation();
  report["notes_stored"] = store->size();
  return report;
}

struct EngineParts {
  Deployment deployment;
  std::shared_ptr<embedding::Embedder> embedder;
  std::shared_ptr<index::AnnIndex> index;
  std::shared_ptr<store::NoteStore> store;
};

EngineParts open_engine_parts(const DataDir& dir) {
  EngineParts p;
  p.deployment = dir.load_deployment();
  p.embedder = make_embedder(p.deployment.embedding);
  p.index = std::shared_ptr<index::AnnIndex>(index::AnnIndex::load(dir.index()));
  p.store = dir.open_store();
  return p;
}

int serve(const Common& common, const std::string& host, int port, std::size_t threads, const std::string& allowlist_path,
          bool allow_all, const std::string& audit_path, const std::string& project_id) {
  const auto dir = common.dir();
  if (allowlist_path.empty() && !allow_all) {
    throw InvalidArgument("an allowlist is required (--allowlist FILE, or --allow-all for unrestricted development use)");
  }
  const auto allowlist = allow_all ? query::Allowlist::disabled() : query::Allowlist::load(allowlist_path);
  auto parts = open_engine_parts(dir);
  auto audit = std::make_shared<query::AuditLog>(audit_path.empty() ? dir.audit() : fs::path(audit_path));
  auto workspaces = std::make_shared<query::WorkspaceStore>(dir.workspaces());
  query::EngineConfig ec;
  ec.chunking = parts.deployment.chunking;
  auto engine = std::make_shared<query::SearchEngine>(parts.embedder, parts.index, parts.store, audit, workspaces, ec);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service::ServiceOptions options;
  options.host = host;
  options.port = static_cast<std::uint16_t>(port);
  options.threads = threads;
  options.project_id = project_id;
  service::Service svc(options, engine, workspaces, allowlist);
  const auto bound = svc.start();
  std::cout << bound << std::endl;
  std::cerr << "serving " << parts.index->size() << " vectors on " << host << ":" << bound << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  std::cerr << "shutting down" << std::endl;
  svc.stop();
  return 0;
}

json bench_latency(const Common& common, bool synthetic, std::size_t vectors, std::size_t dimension,
                   const std::vector<std::size_t>& levels, std::size_t queries, std::size_t warmup, std::size_t k,
                   std::uint64_t seed) {
  eval::LatencyBenchConfig cfg;
  cfg.levels = parse_sizes(levels, "--levels");
  cfg.queries_per_level = queries;
  cfg.warmup = warmup;
  eval::LatencyReport report;
  if (synthetic) {
    index::IndexConfig ic;
    auto idx = std::make_shared<index::AnnIndex>(dimension, ic);
    idx->train(eval::clustered_unit_vectors(std::min<std::size_t>(vectors, 256 * 100), dimension, 2000, 0.1, seed),
               seed);
    constexpr std::size_t kBatch = 100000;
    for (std::size_t start = 0; start < vectors; start += kBatch) {
      const auto n = std::min(kBatch, vectors - start);
      const auto vecs = eval::clustered_unit_vectors(n, dimension, 2000, 0.1, seed + 1 + start);
      std::vector<index::VectorEntry> entries(n);
      for (std::size_t i = 0; i < n; ++i) {
        entries[i].note_id = start + i + 1;
        entries[i].chunk_id = make_chunk_id(start + i + 1, 0);
        entries[i].vector = vecs[i];
      }
      idx->insert(entries);
    }
    const auto qs = eval::clustered_unit_vectors(1000, dimension, 2000, 0.1, seed + 999983);
    report = eval::run_latency_bench(eval::index_search_target(*idx, qs, k), cfg);
    report.label = "synthetic-index";
    report.corpus_vectors = idx->size();
  } else {
    const auto dir = common.dir();
    auto parts = open_engine_parts(dir);
    auto audit = std::make_shared<query::AuditLog>();
    query::EngineConfig ec;
    ec.chunking = parts.deployment.chunking;
    query::SearchEngine engine(parts.embedder, parts.index, parts.store, audit, nullptr, ec);
    const std::vector<std::string> questions{
        "age at seizure onset",          "primary oncologic diagnosis", "injury mechanism and fracture",
        "family history of cancer",      "chemotherapy regimen",        "follow up plan",
        "medications at discharge",      "developmental milestones",    "imaging findings",
        "reason for emergency visit"};
    std::vector<query::SearchRequest> requests;
    for (const auto& q : questions) {
      query::SearchRequest r;
      r.question = q;
      r.notes_to_retrieve = k;
      requests.push_back(r);
    }
    report = eval::run_latency_bench(eval::engine_target(engine, requests, {}, "bench", query::Allowlist::disabled()),
                                     cfg);
    report.label = "engine";
    report.corpus_vectors = parts.index->size();
  }
  return eval::to_json(report);
}

json eval_mcqa(const Common& common, const std::string& items_path, const std::string& truth_path, std::size_t count,
               std::uint64_t seed, const std::vector<std::size_t>& ks, std::size_t runs, const std::string& answer_url,
               bool include_items) {
  std::vector<eval::McqaItem> items;
  if (!items_path.empty()) {
    items = eval::read_mcqa_jsonl(items_path);
  } else if (!truth_path.empty()) {
    items = eval::generate_mcqa_items(ingest::read_truth_jsonl(truth_path), count, seed);
  } else {
    throw InvalidArgument("eval-mcqa needs --items or --truth");
  }
  const auto dir = common.dir();
  auto parts = open_engine_parts(dir);
  query::SearchEngine engine(parts.embedder, parts.index, parts.store, std::make_shared<query::AuditLog>());
  std::unique_ptr<eval::Answerer> answerer;
  if (answer_url.empty()) {
    answerer = std::make_unique<eval::ContainmentAnswerer>();
  } else {
    const auto colon = answer_url.rfind(':');
    if (colon == std::string::npos) throw InvalidArgument("--answer-url must be host:port");
    answerer = std::make_unique<eval::HttpAnswerer>(answer_url.substr(0, colon), std::stoi(answer_url.substr(colon + 1)));
  }
  const auto sweep = eval::run_k_sweep(items, eval::engine_retriever(engine), *answerer, parse_sizes(ks, "--k"), runs);
  json out{{"schema_version", 1},
           {"report", "mcqa_sweep"},
           {"answerer", answer_url.empty() ? "containment" : "http"},
           {"items", items.size()}};
  json arr = json::array();
  for (const auto& r : sweep) arr.push_back(eval::to_json(r, include_items));
  out["runs"] = std::move(arr);
  if (sweep.size() == 1) {
    out["k"] = sweep[0].k;
    out["accuracy"] = sweep[0].accuracy;
    out["wilson_ci"] = out["runs"][0]["wilson_ci"];
  }
  return out;
}

json run_stats(const std::string& records_path, std::size_t resamples, std::uint64_t seed) {
  const auto records = stats::read_abstraction_jsonl(records_path);
  std::map<std::string, std::vector<stats::AbstractionRecord>> by_task;
  std::vector<double> ehr_times, semantic_times;
  for (const auto& r : records) {
    by_task[r.task_id].push_back(r);
    (r.method == stats::Method::kEhr ? ehr_times : semantic_times).push_back(r.time_seconds);
  }
  json tasks = json::array();
  for (const auto& [task, rs] : by_task) {
    json t{{"task_id", task}, {"kind", rs.front().category ? "categorical" : "numeric"}, {"records", rs.size()}};
    try {
      const auto pa = stats::pairwise_agreement(rs);
      t["within"] = pa.within;
      t["cross"] = pa.cross;
      t["within_pairs"] = pa.within_pairs;
      t["cross_pairs"] = pa.cross_pairs;
      t["overall"] = stats::overall_agreement(rs);
      const auto b = stats::bootstrap_agreement_diff(rs, resamples, seed);
      t["bootstrap"] = {{"delta", b.delta}, {"p_value", b.p_value}, {"resamples", b.resamples}, {"redrawn", b.redrawn}};
    } catch (const Error& e) {
      t["error"] = e.what();
    }
    tasks.push_back(std::move(t));
  }
  json out{{"schema_version", 1}, {"report", "abstraction_stats"}, {"tasks", std::move(tasks)}};
  if (!ehr_times.empty() && !semantic_times.empty()) {
    const auto mw = stats::mann_whitney_u(ehr_times, semantic_times);
    out["completion_time"] = {{"n_ehr", ehr_times.size()},
                              {"n_semantic", semantic_times.size()},
                              {"median_ehr_seconds", eval::quantile(ehr_times, 0.5)},
                              {"median_semantic_seconds", eval::quantile(semantic_times, 0.5)},
                              {"u", mw.u},
                              {"p_value", mw.p_value},
                              {"method", mw.method == stats::MwMethod::kExact ? "exact" : "normal"}};
  }
  return out;
}

void emit(const json& report, const std::string& path) {
  if (path.empty()) {
    std::cout << report.dump(2) << std::endl;
  } else {
    write_json(path, report);
    std::cerr << "wrote " << path << std::endl;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic search over clinical notes"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--data-dir", common.data_dir, "Deployment directory (env NOTESEARCH_DATA_DIR)")->capture_default_str();

  // generate-corpus
  auto* gen = app.add_subcommand("generate-corpus", "Write a synthetic note corpus with planted facts");
  ingest::SyntheticCorpusSpec corpus_spec;
  std::string corpus_out = "corpus";
  gen->add_option("--out", corpus_out, "Output directory")->capture_default_str();
  gen->add_option("--patients", corpus_spec.num_patients)->capture_default_str();
  gen->add_option("--seed", corpus_spec.seed)->capture_default_str();
  gen->add_option("--min-notes", corpus_spec.min_notes_per_patient)->capture_default_str();
  gen->add_option("--max-notes", corpus_spec.max_notes_per_patient)->capture_default_str();
  gen->add_option("--long-fraction", corpus_spec.long_note_fraction)->capture_default_str();

  // train-index / build-index / ingest
  IndexFlags index_flags;
  std::string notes_path;
  std::string index_out;
  auto* train_cmd = app.add_subcommand("train-index", "Train index partitions on a sample of note chunks");
  index_flags.add(train_cmd);
  train_cmd->add_option("--notes", notes_path, "notes.jsonl")->required();
  train_cmd->add_option("--out", index_out, "Index file (default <data-dir>/index.idx)");

  IndexFlags build_flags;
  std::vector<std::string> excluded;
  std::string report_path;
  auto* build_cmd = app.add_subcommand("build-index", "Train a fresh index and ingest all notes into it");
  build_flags.add(build_cmd);
  build_cmd->add_option("--notes", notes_path, "notes.jsonl")->required();
  build_cmd->add_option("--exclude-category", excluded, "Note categories dropped at ingest");
  build_cmd->add_option("--report", report_path, "Write the ingest report here");

  bool incremental = false;
  auto* ingest_cmd = app.add_subcommand("ingest", "Chunk, embed, store and index notes by month partition");
  ingest_cmd->add_option("--notes", notes_path, "notes.jsonl")->required();
  ingest_cmd->add_option("--exclude-category", excluded, "Note categories dropped at ingest");
  ingest_cmd->add_flag("--incremental", incremental, "Add only notes not yet stored, as one index batch");
  ingest_cmd->add_option("--report", report_path, "Write the ingest report here");

  // serve
  std::string host = env_or("NOTESEARCH_HOST", "127.0.0.1");
  int port = std::atoi(env_or("NOTESEARCH_PORT", "8080").c_str());
  std::size_t threads = 8;
  std::string allowlist_path = env_or("NOTESEARCH_ALLOWLIST", "");
  std::string audit_path = env_or("NOTESEARCH_AUDIT", "");
  std::string project_id = env_or("NOTESEARCH_PROJECT_ID", "");
  bool allow_all = false;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service; prints the bound port");
  serve_cmd->add_option("--host", host, "Bind address (env NOTESEARCH_HOST)")->capture_default_str();
  serve_cmd->add_option("--port", port, "Port, 0 picks a free one (env NOTESEARCH_PORT)")->capture_default_str();
  serve_cmd->add_option("--threads", threads)->capture_default_str();
  serve_cmd->add_option("--allowlist", allowlist_path, "Approved note ids, one per line (env NOTESEARCH_ALLOWLIST)");
  serve_cmd->add_flag("--allow-all", allow_all, "Disable allowlist enforcement");
  serve_cmd->add_option("--audit", audit_path, "Audit log path (env NOTESEARCH_AUDIT)");
  serve_cmd->add_option("--project-id", project_id, "Project id reported by /health (env NOTESEARCH_PROJECT_ID)");

  // bench-latency
  bool synthetic = false;
  std::size_t bench_vectors = 1000000, bench_dim = 64, bench_queries = 200, bench_warmup = 20, bench_k = 20;
  std::uint64_t bench_seed = 1;
  std::vector<std::size_t> levels{1, 5, 10, 20, 40, 80};
  auto* bench_cmd = app.add_subcommand("bench-latency", "Closed-loop concurrency sweep with stage timings");
  bench_cmd->add_flag("--synthetic", synthetic, "Benchmark a synthetic clustered index instead of the deployment");
  bench_cmd->add_option("--vectors", bench_vectors, "Synthetic index size")->capture_default_str();
  bench_cmd->add_option("--dimension", bench_dim, "Synthetic vector dimension")->capture_default_str();
  bench_cmd->add_option("--levels", levels, "Concurrency levels")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--queries", bench_queries, "Queries per level")->capture_default_str();
  bench_cmd->add_option("--warmup", bench_warmup)->capture_default_str();
  bench_cmd->add_option("--k", bench_k, "Results per query")->capture_default_str();
  bench_cmd->add_option("--seed", bench_seed)->capture_default_str();
  bench_cmd->add_option("--report", report_path, "Write the latency report here");

  // eval-mcqa
  std::string items_path, truth_path, answer_url;
  std::size_t item_count = 100, runs = 5;
  std::uint64_t item_seed = 1;
  std::vector<std::size_t> ks{20};
  bool include_items = false;
  auto* mcqa_cmd = app.add_subcommand("eval-mcqa", "Multiple-choice retrieval QA over planted facts");
  mcqa_cmd->add_option("--items", items_path, "MCQA items (jsonl)");
  mcqa_cmd->add_option("--truth", truth_path, "truth.jsonl to generate items from");
  mcqa_cmd->add_option("--count", item_count, "Items generated from --truth")->capture_default_str();
  mcqa_cmd->add_option("--seed", item_seed)->capture_default_str();
  mcqa_cmd->add_option("--k", ks, "Retrieval depth; several values run a sweep")->delimiter(',')->capture_default_str();
  mcqa_cmd->add_option("--runs", runs, "Answer runs per item")->capture_default_str();
  mcqa_cmd->add_option("--answer-url", answer_url, "host:port of a remote answerer (default: containment oracle)");
  mcqa_cmd->add_flag("--include-items", include_items, "Add per-item votes to the report");
  mcqa_cmd->add_option("--report", report_path, "Write the report here");
  std::string items_out;
  mcqa_cmd->add_option("--write-items", items_out, "Also save the evaluated items (jsonl)");

  // stats
  std::string records_path;
  std::size_t resamples = 10000;
  std::uint64_t stats_seed = 1;
  auto* stats_cmd = app.add_subcommand("stats", "Agreement and completion-time statistics for an abstraction study");
  stats_cmd->add_option("--records", records_path, "Abstraction records (jsonl)")->required();
  stats_cmd->add_option("--resamples", resamples)->capture_default_str();
  stats_cmd->add_option("--seed", stats_seed)->capture_default_str();
  stats_cmd->add_option("--report", report_path, "Write the report here");

  // plot
  std::string plot_in, plot_out;
  auto* plot_cmd = app.add_subcommand("plot", "Render a latency or k-sweep report as SVG");
  plot_cmd->add_option("--report", plot_in, "Report written by bench-latency or eval-mcqa")->required();
  plot_cmd->add_option("--out", plot_out, "SVG output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto corpus = ingest::generate_synthetic_corpus(corpus_spec);
      ingest::write_corpus(corpus_out, corpus);
      std::cerr << "wrote " << corpus.notes.size() << " notes and " << corpus.facts.size() << " facts to "
                << corpus_out << std::endl;
    } else if (*train_cmd) {
      const auto idx = train(common, index_flags, notes_path);
      const fs::path out = index_out.empty() ? common.dir().index() : fs::path(index_out);
      idx->save(out);
      std::cerr << "trained " << index_flags.partitions << " partitions, wrote " << out << std::endl;
    } else if (*build_cmd) {
      const auto dir = common.dir();
      train(common, build_flags, notes_path)->save(dir.index());
      emit(ingest_notes(dir, notes_path, excluded, false), report_path);
    } else if (*ingest_cmd) {
      emit(ingest_notes(common.dir(), notes_path, excluded, incremental), report_path);
    } else if (*serve_cmd) {
      return serve(common, host, port, threads, allowlist_path, allow_all, audit_path, project_id);
    } else if (*bench_cmd) {
      emit(bench_latency(common, synthetic, bench_vectors, bench_dim, levels, bench_queries, bench_warmup, bench_k,
                         bench_seed),
           report_path);
    } else if (*mcqa_cmd) {
      const auto report =
          eval_mcqa(common, items_path, truth_path, item_count, item_seed, ks, runs, answer_url, include_items);
      if (!items_out.empty()) {
        const auto items = items_path.empty()
                               ? eval::generate_mcqa_items(ingest::read_truth_jsonl(truth_path), item_count, item_seed)
                               : eval::read_mcqa_jsonl(items_path);
        eval::write_mcqa_jsonl(items_out, items);
      }
      emit(report, report_path);
    } else if (*stats_cmd) {
      emit(run_stats(records_path, resamples, stats_seed), report_path);
    } else if (*plot_cmd) {
      const auto report = read_json(plot_in);
      const auto kind = report.value("report", "");
      std::string svg;
      if (kind == "latency") {
        svg = tools::latency_svg(report);
      } else if (kind == "mcqa_sweep") {
        svg = tools::k_sweep_svg(report);
      } else {
        throw InvalidArgument("cannot plot report kind '" + kind + "'");
      }
      std::ofstream(plot_out) << svg;
      std::cerr << "wrote " << plot_out << std::endl;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
