#include "levelnavi/cli.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <sstream>

#include "levelnavi/bench_runner.hpp"
#include "levelnavi/domain.hpp"
#include "levelnavi/level_searcher.hpp"
#include "levelnavi/llm_gateway.hpp"
#include "levelnavi/metrics.hpp"
#include "levelnavi/planner.hpp"
#include "levelnavi/prompts.hpp"
#include "levelnavi/text_util.hpp"

namespace levelnavi {

namespace fs = std::filesystem;

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (!v) return std::nullopt;
        return std::string(v);
    };
}

const std::vector<std::pair<std::string, std::string>>& CliConfig::defaults() {
    static const std::vector<std::pair<std::string, std::string>> d{
        {"llm.base_url", "https://api.openai.com/v1"},
        {"llm.api_key", ""},
        {"llm.model", "gpt-4o-mini"},
        {"llm.timeout_ms", "120000"},
        {"judge.model", ""},
        {"judge.normalization", "affine"},
        {"embed.base_url", ""},
        {"embed.api_key", ""},
        {"embed.model", "hashing"},
        {"search.base_url", ""},
        {"search.api_key", ""},
        {"web.mode", "replay"},
        {"web.cache_dir", "web_cache"},
        {"web.max_hits", "10"},
        {"web.per_host_concurrency", "2"},
        {"web.fetch_timeout_ms", "10000"},
        {"agent.fewshot", "zero"},
        {"agent.max_iterations", "5"},
        {"agent.max_subquestions", "5"},
        {"agent.max_parallel_searchers", "5"},
        {"searcher.top_k", "5"},
        {"searcher.page_budget", "6000"},
        {"searcher.max_open", "3"},
        {"searcher.max_search_calls", "1"},
        {"bench.concurrency", "4"},
        {"bench.runs_dir", "runs"},
        {"eval.n_questions", "3"},
        {"eval.zero_fill", "false"},
        {"eval.concurrency", "4"},
        {"fixtures", ""},
        {"prompts.dir", ""},
    };
    return d;
}

CliConfig::CliConfig() {
    for (const auto& [k, v] : defaults()) values_[k] = {v, "default"};
}

std::string CliConfig::env_name(const std::string& key) {
    std::string name = "LEVELNAVI_";
    for (char c : key) name += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return name;
}

void CliConfig::set(const std::string& key, const std::string& value, const std::string& source) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    it->second = {value, source};
}

namespace {

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
    for (const auto& [k, v] : j.items()) {
        std::string key = prefix.empty() ? k : prefix + "." + k;
        if (v.is_object())
            flatten(v, key, out);
        else if (v.is_string())
            out.emplace_back(key, v.get<std::string>());
        else if (v.is_boolean())
            out.emplace_back(key, v.get<bool>() ? "true" : "false");
        else if (v.is_number() || v.is_null())
            out.emplace_back(key, v.is_null() ? "" : v.dump());
        else
            throw ConfigError("config key " + key + " must be a scalar");
    }
}

bool is_secret(const std::string& key) { return key.size() > 8 && key.ends_with(".api_key"); }

}  // namespace

void CliConfig::apply_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    json j = json::parse(in, nullptr, false);
    if (!j.is_object()) throw ConfigError("config file " + path.string() + " is not a JSON object");
    std::vector<std::pair<std::string, std::string>> flat;
    flatten(j, "", flat);
    for (const auto& [k, v] : flat) set(k, v, "file:" + path.string());
}

void CliConfig::apply_env(const EnvLookup& env) {
    for (auto& [key, value] : values_) {
        std::string name = env_name(key);
        if (auto v = env(name)) value = {*v, "env:" + name};
    }
}

const CliConfig::Value& CliConfig::entry(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
}

const std::string& CliConfig::get(const std::string& key) const { return entry(key).value; }

std::size_t CliConfig::get_size(const std::string& key) const {
    const std::string& v = get(key);
    try {
        std::size_t used = 0;
        long long n = std::stoll(v, &used);
        if (used != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError(fmt::format("{} must be a non-negative integer, got '{}' ({})", key, v, entry(key).source));
    }
}

bool CliConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no" || v.empty()) return false;
    throw ConfigError(fmt::format("{} must be true or false, got '{}'", key, v));
}

std::string CliConfig::show() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        std::string shown = is_secret(k) && !v.value.empty() ? "****" : v.value;
        out += fmt::format("{} = {}  [{}]\n", k, shown, v.source);
    }
    return out;
}

json CliConfig::snapshot() const {
    json j = json::object();
    for (const auto& [k, v] : values_)
        if (!is_secret(k)) j[k] = v.value;
    return j;
}

namespace {

struct Runtime {
    std::shared_ptr<HttpTransport> transport;
    std::unique_ptr<Gateway> llm;
    std::unique_ptr<Gateway> judge;
    std::unique_ptr<Gateway> generator;
    std::unique_ptr<Embedder> embedder;
    std::unique_ptr<WebAccess> web;
    PromptSet prompts;
    PlannerConfig planner;
    SearcherConfig searcher;
};

std::string require(const CliConfig& cfg, const std::string& key, const std::string& what) {
    const std::string& v = cfg.get(key);
    if (v.empty()) throw ConfigError(fmt::format("missing {}: set {} (or {} in the config file)", what, CliConfig::env_name(key), key));
    return v;
}

OpenAIConfig llm_endpoint(const CliConfig& cfg, const std::string& model) {
    OpenAIConfig c;
    c.base_url = cfg.get("llm.base_url");
    c.api_key = require(cfg, "llm.api_key", "LLM API key");
    c.model = model;
    c.timeout = std::chrono::milliseconds(cfg.get_size("llm.timeout_ms"));
    return c;
}

std::shared_ptr<ChatProvider> scripted(const fs::path& p) {
    if (!fs::exists(p)) throw ConfigError("fixture script missing: " + p.string());
    return ScriptedChatProvider::from_file(p);
}

// Agent pieces (planner model, web) and/or evaluation pieces (judge,
// generator, embedder). With fixtures everything is offline and the
// transport refuses to touch the network.
Runtime build_runtime(const CliConfig& cfg, bool agent, bool eval) {
    Runtime rt;
    const std::string fixtures = cfg.get("fixtures");
    const bool offline = !fixtures.empty();
    rt.transport = offline ? std::shared_ptr<HttpTransport>(std::make_shared<FailingTransport>()) : default_transport();

    rt.prompts = cfg.get("prompts.dir").empty() ? PromptSet::defaults() : PromptSet::load(cfg.get("prompts.dir"));

    auto fewshot = parse_fewshot_mode(cfg.get("agent.fewshot"));
    if (!fewshot) throw ConfigError("agent.fewshot must be 0, 1 or 3, got '" + cfg.get("agent.fewshot") + "'");
    rt.planner.mode = *fewshot;
    rt.planner.max_iterations = cfg.get_size("agent.max_iterations");
    rt.planner.max_subquestions_per_step = cfg.get_size("agent.max_subquestions");
    rt.planner.max_parallel_searchers = cfg.get_size("agent.max_parallel_searchers");
    if (rt.planner.max_iterations == 0) throw ConfigError("agent.max_iterations must be at least 1");
    if (rt.planner.max_subquestions_per_step == 0) throw ConfigError("agent.max_subquestions must be at least 1");
    rt.searcher.top_k = cfg.get_size("searcher.top_k");
    rt.searcher.page_budget = cfg.get_size("searcher.page_budget");
    rt.searcher.max_open = cfg.get_size("searcher.max_open");
    rt.searcher.max_search_calls = cfg.get_size("searcher.max_search_calls");
    if (rt.searcher.max_search_calls == 0) throw ConfigError("searcher.max_search_calls must be at least 1");

    if (agent) {
        if (offline) {
            rt.llm = std::make_unique<Gateway>(scripted(fs::path(fixtures) / "llm.jsonl"));
        } else {
            rt.llm = std::make_unique<Gateway>(
                std::make_shared<OpenAIChatProvider>(llm_endpoint(cfg, cfg.get("llm.model")), rt.transport));
        }

        WebConfig wc;
        auto mode = parse_web_mode(cfg.get("web.mode"));
        if (!mode) throw ConfigError("web.mode must be live, record or replay, got '" + cfg.get("web.mode") + "'");
        wc.mode = *mode;
        if (offline && wc.mode != WebMode::replay)
            throw ConfigError("fixtures are replay-only; web.mode is '" + cfg.get("web.mode") + "'");
        wc.cache_dir = offline ? fs::path(fixtures) / "web" : fs::path(cfg.get("web.cache_dir"));
        wc.max_hits = cfg.get_size("web.max_hits");
        wc.per_host_concurrency = cfg.get_size("web.per_host_concurrency");
        wc.fetch_timeout = std::chrono::milliseconds(cfg.get_size("web.fetch_timeout_ms"));
        if (rt.searcher.top_k == 0 || rt.searcher.top_k > wc.max_hits)
            throw ConfigError(fmt::format("searcher.top_k must be in 1..{}", wc.max_hits));
        std::shared_ptr<SearchBackend> backend;
        if (wc.mode != WebMode::replay) {
            HttpSearchBackend::Config sc;
            sc.base_url = require(cfg, "search.base_url", "search API endpoint");
            sc.api_key = require(cfg, "search.api_key", "search API key");
            sc.timeout = wc.fetch_timeout;
            backend = std::make_shared<HttpSearchBackend>(sc, rt.transport);
        }
        rt.web = std::make_unique<WebAccess>(wc, backend, rt.transport);
    }

    if (eval) {
        std::shared_ptr<ChatProvider> judge;
        if (offline) {
            judge = scripted(fs::path(fixtures) / "judge.jsonl");
        } else {
            std::string model = cfg.get("judge.model").empty() ? cfg.get("llm.model") : cfg.get("judge.model");
            judge = std::make_shared<OpenAIChatProvider>(llm_endpoint(cfg, model), rt.transport);
        }
        rt.judge = std::make_unique<Gateway>(judge);
        rt.generator = std::make_unique<Gateway>(judge);

        std::shared_ptr<EmbeddingProvider> emb = std::make_shared<HashingEmbeddingProvider>();
        if (offline) {
            fs::path table = fs::path(fixtures) / "embeddings.json";
            if (fs::exists(table)) emb = TableEmbeddingProvider::from_file(table, emb);
        } else if (cfg.get("embed.model") != "hashing") {
            OpenAIConfig ec;
            ec.base_url = cfg.get("embed.base_url").empty() ? cfg.get("llm.base_url") : cfg.get("embed.base_url");
            ec.api_key = cfg.get("embed.api_key").empty() ? require(cfg, "llm.api_key", "embedding API key")
                                                           : cfg.get("embed.api_key");
            ec.model = cfg.get("embed.model");
            ec.timeout = std::chrono::milliseconds(cfg.get_size("llm.timeout_ms"));
            emb = std::make_shared<OpenAIEmbeddingProvider>(ec, rt.transport);
        }
        rt.embedder = std::make_unique<Embedder>(emb);
    }
    return rt;
}

std::vector<QAPair> read_dataset(const std::string& path, std::ostream& err) {
    try {
        return load_dataset(path);
    } catch (const AggregateValidationError& e) {
        for (const auto& v : e.errors()) err << v.what() << "\n";
        throw;
    }
}

std::string level_summary(const TaskTrace& t) {
    std::size_t n[3] = {0, 0, 0};
    for (const auto& it : t.iterations)
        for (const auto& s : it.searches) ++n[static_cast<int>(s.level)];
    return fmt::format("L0={} L1={} L2={}", n[0], n[1], n[2]);
}

int cmd_ask(const CliConfig& cfg, const std::string& question, const std::string& trace_path, bool timestamps,
            std::ostream& out, std::ostream& err) {
    if (is_blank(question)) {
        err << "error: empty question\n";
        return kExitConfig;
    }
    Runtime rt = build_runtime(cfg, true, false);
    PlannerConfig pc = rt.planner;
    pc.record_timing = timestamps;
    Planner planner(*rt.llm, rt.prompts, pc);
    LevelSearcher searcher(*rt.llm, *rt.web, rt.prompts, rt.searcher);
    TaskTrace trace = planner.run_task(question, searcher);

    if (!trace_path.empty()) {
        std::ofstream f(trace_path, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write trace file " + trace_path);
        f << to_json(trace).dump(2) << "\n";
    }
    if (trace.final_response) out << *trace.final_response << "\n\n";
    out << "status: " << to_string(trace.status) << "\n";
    out << "iterations: " << trace.iterations.size() << "\n";
    out << "searchers: " << trace.searcher_count << "\n";
    out << "levels: " << level_summary(trace) << "\n";
    out << "function calls: " << trace.function_call_count << "\n";
    if (timestamps) out << fmt::format("elapsed: {:.2f} s\n", trace.wall_time);
    if (trace.status == TaskStatus::completed) return kExitOk;
    if (trace.error) err << "task " << to_string(trace.status) << ": " << *trace.error << "\n";
    return trace.provider_failure ? kExitProvider : kExitTask;
}

int cmd_bench_run(const CliConfig& cfg, const std::string& dataset_path, const std::string& run_dir_flag,
                  bool timestamps, std::ostream& out, std::ostream& err) {
    std::vector<QAPair> dataset;
    try {
        dataset = read_dataset(dataset_path, err);
    } catch (const Error& e) {
        err << "dataset: " << e.what() << "\n";
        return kExitDataset;
    }
    if (dataset.empty()) {
        err << "dataset: no records in " << dataset_path << "\n";
        return kExitDataset;
    }
    Runtime rt = build_runtime(cfg, true, false);
    PlannerConfig pc = rt.planner;
    pc.record_timing = timestamps;
    Planner planner(*rt.llm, rt.prompts, pc);
    LevelSearcher searcher(*rt.llm, *rt.web, rt.prompts, rt.searcher);

    json snapshot = cfg.snapshot();
    snapshot["dataset"] = fs::absolute(dataset_path).lexically_normal().string();
    RunOptions opts;
    opts.concurrency = cfg.get_size("bench.concurrency");
    if (opts.concurrency == 0) throw ConfigError("bench.concurrency must be at least 1");
    opts.config_snapshot = snapshot;
    opts.timestamps = timestamps;
    opts.run_id = make_run_id(snapshot, timestamps ? utc_timestamp() : "run");
    opts.run_dir = run_dir_flag.empty() ? fs::path(cfg.get("bench.runs_dir")) / opts.run_id : fs::path(run_dir_flag);

    RunRecord run = run_benchmark(dataset, [&](const QAPair& q) { return planner.run_task(q.question, searcher); }, opts);
    std::size_t completed = 0, provider = 0;
    for (const auto& t : run.traces) {
        completed += t.status == TaskStatus::completed;
        provider += t.provider_failure;
    }
    out << fmt::format("run {}: {} tasks, {} completed\n", run.run_id, run.traces.size(), completed);
    out << "run dir: " << opts.run_dir->string() << "\n";
    if (provider) err << provider << " task(s) hit a provider failure\n";
    return kExitOk;
}

int cmd_bench_eval(const CliConfig& cfg, const std::string& run_dir, const std::string& dataset_flag, bool resume,
                   std::ostream& out, std::ostream& err) {
    if (!fs::exists(fs::path(run_dir) / "traces.jsonl")) {
        err << "run: no traces in " << run_dir << "\n";
        return kExitDataset;
    }
    RunRecord run;
    try {
        run = load_run(run_dir);
    } catch (const Error& e) {
        err << "run: " << e.what() << "\n";
        return kExitDataset;
    }
    if (run.traces.empty()) {
        err << "run: no traces in " << run_dir << "\n";
        return kExitDataset;
    }
    std::string dataset_path = dataset_flag;
    if (dataset_path.empty() && run.config_snapshot.contains("dataset"))
        dataset_path = run.config_snapshot["dataset"].get<std::string>();
    if (dataset_path.empty()) throw ConfigError("no dataset recorded for this run; pass --dataset");
    std::vector<QAPair> dataset;
    try {
        dataset = read_dataset(dataset_path, err);
    } catch (const Error& e) {
        err << "dataset: " << e.what() << "\n";
        return kExitDataset;
    }

    Runtime rt = build_runtime(cfg, false, true);
    auto norm = parse_judge_normalization(cfg.get("judge.normalization"));
    if (!norm) throw ConfigError("judge.normalization must be affine or tenth");
    EvalContext ctx{*rt.judge, *rt.generator, *rt.embedder, rt.prompts};
    ctx.normalization = *norm;
    ctx.n_questions = cfg.get_size("eval.n_questions");
    ctx.aggregate.zero_fill = cfg.get_bool("eval.zero_fill");
    ctx.concurrency = std::max<std::size_t>(1, cfg.get_size("eval.concurrency"));
    ctx.run_dir = fs::path(run_dir);
    ctx.resume = resume;
    try {
        evaluate_run(run, dataset, ctx);
    } catch (const DatasetMismatch& e) {
        err << "dataset: " << e.what() << "\n";
        return kExitDataset;
    } catch (const TransportError& e) {
        err << "provider failure (partial scores kept, rerun with --resume): " << e.what() << "\n";
        return kExitProvider;
    } catch (const ProviderError& e) {
        err << "provider failure (partial scores kept, rerun with --resume): " << e.what() << "\n";
        return kExitProvider;
    }
    out << render_report({{fs::path(run_dir).filename().string(), *run.report}});
    return kExitOk;
}

int cmd_bench_report(const std::vector<std::string>& runs, std::ostream& out, std::ostream& err) {
    std::vector<std::pair<std::string, MetricReport>> rows;
    for (const auto& dir : runs) {
        RunRecord run;
        try {
            run = load_run(dir);
        } catch (const Error& e) {
            err << "run: " << e.what() << "\n";
            return kExitDataset;
        }
        if (!run.report) {
            err << "run " << dir << " has not been evaluated (bench eval)\n";
            return kExitDataset;
        }
        std::string label = fs::path(dir).lexically_normal().filename().string();
        if (label.empty()) label = fs::path(dir).lexically_normal().parent_path().filename().string();
        rows.emplace_back(label, *run.report);
    }
    out << render_report(rows);
    return kExitOk;
}

int cmd_bench_compare(const std::string& a, const std::string& b, std::ostream& out, std::ostream& err) {
    try {
        out << render_comparison(compare_runs(load_run(a), load_run(b)));
    } catch (const DatasetMismatch& e) {
        err << "dataset mismatch: " << e.what() << "\n";
        return kExitDataset;
    } catch (const IoError& e) {
        err << "run: " << e.what() << "\n";
        return kExitDataset;
    }
    return kExitOk;
}

int cmd_dataset_validate(const std::string& path, std::ostream& out, std::ostream& err) {
    try {
        auto records = load_dataset(path);
        out << fmt::format("OK ({} records)\n", records.size());
        return kExitOk;
    } catch (const AggregateValidationError& e) {
        for (const auto& v : e.errors()) out << v.what() << "\n";
        out << fmt::format("{} error(s)\n", e.errors().size());
        return kExitDataset;
    } catch (const Error& e) {
        err << e.what() << "\n";
        return kExitDataset;
    }
}

int cmd_dataset_stats(const std::string& path, std::ostream& out, std::ostream& err) {
    try {
        out << render_stats_matrix(dataset_stats(load_dataset(path)));
        return kExitOk;
    } catch (const AggregateValidationError& e) {
        for (const auto& v : e.errors()) err << v.what() << "\n";
        return kExitDataset;
    } catch (const Error& e) {
        err << e.what() << "\n";
        return kExitDataset;
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
    CLI::App app{"Web search agent with level-aware retrieval, plus its benchmark harness", "levelnavi"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, fixtures, mode, fewshot, runs_dir;
    std::size_t max_iterations = 0, concurrency = 0;
    std::vector<std::string> sets;
    bool no_timestamps = false;
    app.add_option("--config", config_path, "JSON config file (default: $LEVELNAVI_CONFIG)");
    app.add_option("--fixtures", fixtures, "offline fixture directory (llm.jsonl, judge.jsonl, web/, embeddings.json)");
    app.add_option("--mode", mode, "web mode: live, record or replay");
    app.add_option("--fewshot", fewshot, "planner exemplars: 0, 1 or 3");
    app.add_option("--max-iterations", max_iterations, "planner iteration budget");
    app.add_option("--concurrency", concurrency, "tasks in flight during bench run");
    app.add_option("--runs-dir", runs_dir, "parent directory for new runs");
    app.add_option("--set", sets, "override any config key: key=value")->allow_extra_args(false);
    app.add_flag("--no-timestamps", no_timestamps, "omit times and durations so output is reproducible");

    auto* ask = app.add_subcommand("ask", "answer one question");
    std::string question, trace_path;
    ask->add_option("question", question, "the question")->required();
    ask->add_option("--trace", trace_path, "write the full trace as JSON");

    auto* bench = app.add_subcommand("bench", "benchmark runs");
    bench->require_subcommand(1);
    auto* brun = bench->add_subcommand("run", "execute a dataset");
    std::string dataset_path, run_dir;
    brun->add_option("--dataset", dataset_path, "JSONL dataset")->required();
    brun->add_option("--run-dir", run_dir, "run directory (resumes if it has traces)");
    auto* beval = bench->add_subcommand("eval", "score a run");
    std::string eval_run, eval_dataset;
    bool resume = false;
    beval->add_option("--run", eval_run, "run directory")->required();
    beval->add_option("--dataset", eval_dataset, "dataset (default: the one the run used)");
    beval->add_flag("--resume", resume, "keep scores from an interrupted evaluation");
    auto* breport = bench->add_subcommand("report", "table of evaluated runs");
    std::vector<std::string> report_runs;
    breport->add_option("--runs", report_runs, "run directories, comma separated")->required()->delimiter(',');
    auto* bcompare = bench->add_subcommand("compare", "diff two evaluated runs");
    std::string run_a, run_b;
    bcompare->add_option("a", run_a, "baseline run directory")->required();
    bcompare->add_option("b", run_b, "other run directory")->required();

    auto* dataset = app.add_subcommand("dataset", "dataset utilities");
    dataset->require_subcommand(1);
    std::string ds_path;
    auto* dvalidate = dataset->add_subcommand("validate", "check every record");
    dvalidate->add_option("path", ds_path, "JSONL dataset")->required();
    auto* dstats = dataset->add_subcommand("stats", "domain x question type counts");
    dstats->add_option("path", ds_path, "JSONL dataset")->required();

    auto* config = app.add_subcommand("config", "configuration");
    config->require_subcommand(1);
    auto* cshow = config->add_subcommand("show", "print effective values and where they came from");

    std::vector<std::string> argv_store{"levelnavi"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e, out, err);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        CliConfig cfg;
        if (config_path.empty())
            if (auto p = env("LEVELNAVI_CONFIG")) config_path = *p;
        if (!config_path.empty()) cfg.apply_file(config_path);
        cfg.apply_env(env);
        if (!fixtures.empty()) cfg.set("fixtures", fixtures, "flag");
        if (!mode.empty()) cfg.set("web.mode", mode, "flag");
        if (!fewshot.empty()) cfg.set("agent.fewshot", fewshot, "flag");
        if (app.count("--max-iterations")) cfg.set("agent.max_iterations", std::to_string(max_iterations), "flag");
        if (app.count("--concurrency")) cfg.set("bench.concurrency", std::to_string(concurrency), "flag");
        if (!runs_dir.empty()) cfg.set("bench.runs_dir", runs_dir, "flag");
        for (const auto& s : sets) {
            auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
            cfg.set(s.substr(0, eq), s.substr(eq + 1), "flag");
        }
        const bool timestamps = !no_timestamps;

        if (*ask) return cmd_ask(cfg, question, trace_path, timestamps, out, err);
        if (*brun) return cmd_bench_run(cfg, dataset_path, run_dir, timestamps, out, err);
        if (*beval) return cmd_bench_eval(cfg, eval_run, eval_dataset, resume, out, err);
        if (*breport) return cmd_bench_report(report_runs, out, err);
        if (*bcompare) return cmd_bench_compare(run_a, run_b, out, err);
        if (*dvalidate) return cmd_dataset_validate(ds_path, out, err);
        if (*dstats) return cmd_dataset_stats(ds_path, out, err);
        if (*cshow) {
            out << cfg.show();
            return kExitOk;
        }
        err << app.help();
        return kExitConfig;
    } catch (const ConfigError& e) {
        err << "config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const TransportError& e) {
        err << "provider: " << e.what() << "\n";
        return kExitProvider;
    } catch (const ProviderError& e) {
        err << "provider: " << e.what() << "\n";
        return kExitProvider;
    } catch (const AggregateValidationError& e) {
        return kExitDataset;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}

}  // namespace levelnavi
