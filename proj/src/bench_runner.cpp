#include "levelnavi/bench_runner.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include "levelnavi/concurrency.hpp"
#include "levelnavi/web_access.hpp"

namespace levelnavi {

namespace fs = std::filesystem;

std::string make_run_id(const json& config, const std::string& utc_time) {
    std::string compact;
    for (char c : utc_time)
        if (c != '-' && c != ':') compact += c;
    return fmt::format("{}-{}", compact, sha256_hex(config.dump()).substr(0, 12));
}

namespace {

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    fs::path tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
        if (!out.flush()) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, p, ec);
    if (ec) throw IoError("cannot replace " + p.string() + ": " + ec.message());
}

// Reads {"id", key} lines. A torn final line (interrupted write) is dropped
// and the file rewritten without it so later appends stay well-formed.
std::map<std::string, json> read_jsonl_by_id(const fs::path& p, const char* key) {
    std::map<std::string, json> out;
    if (!fs::exists(p)) return out;
    std::string text = read_text(p);
    std::istringstream in(text);
    std::string line, kept;
    bool dropped = false;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j.contains(key)) {
            dropped = true;
            continue;
        }
        out[j["id"].get<std::string>()] = j[key];
        kept += line + "\n";
    }
    if (dropped || (!text.empty() && text.back() != '\n')) write_text(p, kept);
    return out;
}

class JsonlAppender {
public:
    JsonlAppender(const fs::path& p, bool truncate) : out_(p, std::ios::binary | (truncate ? std::ios::trunc : std::ios::app)) {
        if (!out_) throw IoError("cannot open " + p.string());
    }
    void append(const json& j) {
        std::lock_guard lock(mu_);
        out_ << j.dump() << '\n';
        if (!out_.flush()) throw IoError("append failed");
    }

private:
    std::mutex mu_;
    std::ofstream out_;
};

TaskTrace failed_trace(const QAPair& item, const std::string& what) {
    TaskTrace t;
    t.question = item.question;
    t.status = TaskStatus::tool_error;
    t.error = what;
    return t;
}

json report_document(const RunRecord& run) {
    return json{{"run_id", run.run_id},
                {"started_at", run.started_at},
                {"finished_at", run.finished_at},
                {"ids", run.ids},
                {"report", run.report ? to_json(*run.report) : json(nullptr)}};
}

}  // namespace

RunRecord run_benchmark(const std::vector<QAPair>& dataset, const TaskExecutor& execute, const RunOptions& opts) {
    if (dataset.empty()) throw EmptyInputError("run_benchmark: empty dataset");
    if (opts.concurrency == 0) throw ConfigError("concurrency must be at least 1");

    RunRecord run;
    run.config_snapshot = opts.config_snapshot;
    for (const auto& q : dataset) run.ids.push_back(q.id);
    run.traces.resize(dataset.size());
    run.scores.resize(dataset.size());
    if (opts.timestamps) run.started_at = utc_timestamp();
    run.run_id = !opts.run_id.empty() ? opts.run_id
                 : opts.timestamps    ? make_run_id(opts.config_snapshot, run.started_at)
                                      : make_run_id(opts.config_snapshot, "run");

    std::map<std::string, json> done;
    std::unique_ptr<JsonlAppender> sink;
    if (opts.run_dir) {
        fs::create_directories(*opts.run_dir);
        fs::path report = *opts.run_dir / "report.json";
        if (fs::exists(report)) {
            json prev = json::parse(read_text(report), nullptr, false);
            if (prev.is_object()) {
                run.run_id = prev.value("run_id", run.run_id);
                if (opts.timestamps) run.started_at = prev.value("started_at", run.started_at);
            }
        }
        write_text(*opts.run_dir / "config.snapshot", opts.config_snapshot.dump(2) + "\n");
        done = read_jsonl_by_id(*opts.run_dir / "traces.jsonl", "trace");
        sink = std::make_unique<JsonlAppender>(*opts.run_dir / "traces.jsonl", false);
    }

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        auto it = done.find(dataset[i].id);
        if (it != done.end())
            run.traces[i] = task_trace_from_json(it->second);
        else
            pending.push_back(i);
    }

    bounded_for_each(pending.size(), opts.concurrency, [&](std::size_t k) {
        std::size_t i = pending[k];
        TaskTrace trace;
        try {
            trace = execute(dataset[i]);
        } catch (const std::exception& e) {
            trace = failed_trace(dataset[i], e.what());
        }
        if (sink) sink->append(json{{"id", dataset[i].id}, {"trace", to_json(trace)}});
        run.traces[i] = std::move(trace);
    });

    if (opts.timestamps) run.finished_at = utc_timestamp();
    if (opts.run_dir) write_text(*opts.run_dir / "report.json", report_document(run).dump(2) + "\n");
    return run;
}

TaskScores score_task(const QAPair& item, const TaskTrace& trace, EvalContext& ctx) {
    TaskScores s;
    if (trace.status != TaskStatus::completed || !trace.final_response) return s;
    const std::string& response = *trace.final_response;

    try {
        JudgeResult j = correctness_score(item.question, item.answer, response, ctx.judge, ctx.prompts,
                                          ctx.normalization);
        s.s_co = j.score;
        s.judge_raw = j.raw;
    } catch (const JudgeFormatError& e) {
        s.errors.push_back(std::string("judge: ") + e.what());
    } catch (const JudgeRangeError& e) {
        s.errors.push_back(std::string("judge: ") + e.what());
    }

    s.s_simi = semantic_similarity(item.answer, response, ctx.embedder);

    RelevanceResult rel = relevance_score(item.question, response, ctx.generator, ctx.embedder, ctx.prompts,
                                          ctx.n_questions);
    s.s_rele = rel.score;
    s.relevance_degraded = rel.degraded;

    try {
        auto resp_tokens = ctx.tokenizer(response);
        auto gold_tokens = ctx.tokenizer(item.answer);
        s.tokens = token_scores(resp_tokens, gold_tokens);
        s.rouge_l = rouge_l(resp_tokens, gold_tokens);
    } catch (const EmptyGold& e) {
        s.errors.push_back(e.what());
    }
    return s;
}

void evaluate_run(RunRecord& run, const std::vector<QAPair>& dataset, EvalContext& ctx) {
    if (run.traces.empty()) throw EmptyInputError("evaluate_run: run has no traces");
    if (run.traces.size() != run.ids.size()) throw DomainError("evaluate_run: ids and traces differ in length");
    std::map<std::string, const QAPair*> by_id;
    for (const auto& q : dataset) by_id[q.id] = &q;
    if (by_id.size() != run.ids.size()) throw DatasetMismatch("run and dataset differ in size");
    for (const auto& id : run.ids)
        if (!by_id.count(id)) throw DatasetMismatch("run id not in dataset: " + id);

    run.scores.assign(run.ids.size(), std::nullopt);
    std::unique_ptr<JsonlAppender> sink;
    if (ctx.run_dir) {
        fs::create_directories(*ctx.run_dir);
        fs::path p = *ctx.run_dir / "scores.jsonl";
        if (ctx.resume) {
            auto prev = read_jsonl_by_id(p, "scores");
            for (std::size_t i = 0; i < run.ids.size(); ++i) {
                auto it = prev.find(run.ids[i]);
                if (it != prev.end()) run.scores[i] = task_scores_from_json(it->second);
            }
        }
        sink = std::make_unique<JsonlAppender>(p, !ctx.resume);
    }

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < run.ids.size(); ++i) {
        if (run.scores[i]) continue;
        if (run.traces[i].status != TaskStatus::completed) {
            run.scores[i] = TaskScores{};
            continue;
        }
        pending.push_back(i);
    }

    bounded_for_each(pending.size(), ctx.concurrency, [&](std::size_t k) {
        std::size_t i = pending[k];
        TaskScores s = score_task(*by_id[run.ids[i]], run.traces[i], ctx);
        if (sink) sink->append(json{{"id", run.ids[i]}, {"scores", to_json(s)}});
        run.scores[i] = std::move(s);
    });

    std::vector<TaskScores> flat;
    flat.reserve(run.scores.size());
    for (const auto& s : run.scores) flat.push_back(s.value_or(TaskScores{}));
    run.report = aggregate_report(run.traces, flat, ctx.aggregate);
    if (ctx.run_dir) write_text(*ctx.run_dir / "report.json", report_document(run).dump(2) + "\n");
}

void save_run(const RunRecord& run, const fs::path& dir) {
    fs::create_directories(dir);
    write_text(dir / "config.snapshot", run.config_snapshot.dump(2) + "\n");
    std::string traces, scores;
    for (std::size_t i = 0; i < run.ids.size(); ++i) {
        traces += json{{"id", run.ids[i]}, {"trace", to_json(run.traces[i])}}.dump() + "\n";
        if (i < run.scores.size() && run.scores[i])
            scores += json{{"id", run.ids[i]}, {"scores", to_json(*run.scores[i])}}.dump() + "\n";
    }
    write_text(dir / "traces.jsonl", traces);
    write_text(dir / "scores.jsonl", scores);
    write_text(dir / "report.json", report_document(run).dump(2) + "\n");
}

RunRecord load_run(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a run directory: " + dir.string());
    RunRecord run;
    if (fs::exists(dir / "config.snapshot")) run.config_snapshot = json::parse(read_text(dir / "config.snapshot"));
    auto traces = read_jsonl_by_id(dir / "traces.jsonl", "trace");
    auto scores = read_jsonl_by_id(dir / "scores.jsonl", "scores");

    json doc = fs::exists(dir / "report.json") ? json::parse(read_text(dir / "report.json")) : json::object();
    run.run_id = doc.value("run_id", "");
    run.started_at = doc.value("started_at", "");
    run.finished_at = doc.value("finished_at", "");
    if (doc.contains("ids")) {
        run.ids = doc["ids"].get<std::vector<std::string>>();
    } else {
        for (const auto& [id, _] : traces) run.ids.push_back(id);
    }
    for (const auto& id : run.ids) {
        auto it = traces.find(id);
        if (it == traces.end()) throw IoError(fmt::format("run {} has no trace for id {}", dir.string(), id));
        run.traces.push_back(task_trace_from_json(it->second));
        auto s = scores.find(id);
        run.scores.push_back(s == scores.end() ? std::nullopt : std::optional<TaskScores>(task_scores_from_json(s->second)));
    }
    if (doc.contains("report") && !doc["report"].is_null()) run.report = metric_report_from_json(doc["report"]);
    return run;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? fmt::format("{:.2f}", *v) : "—"; }

}  // namespace

std::string render_report(const std::vector<std::pair<std::string, MetricReport>>& rows, bool extra_columns) {
    std::vector<std::string> header{"Run", "S_final", "S_co", "S_rele", "S_simi", "S_c", "Pass rate"};
    if (extra_columns)
        for (const char* h : {"F1", "Recall", "ROUGE-L", "Overconfidence", "Non-compliance", "Tasks"}) header.push_back(h);
    std::string out = "|";
    for (const auto& h : header) out += " " + h + " |";
    out += "\n|";
    for (std::size_t i = 0; i < header.size(); ++i) out += i == 0 ? "---|" : "---:|";
    out += "\n";
    for (const auto& [label, r] : rows) {
        std::vector<std::string> cells{label, cell(r.s_final), cell(r.s_co), cell(r.s_rele), cell(r.s_simi),
                                       cell(r.s_c), cell(r.pass_rate)};
        if (extra_columns) {
            cells.push_back(cell(r.f1));
            cells.push_back(cell(r.recall));
            cells.push_back(cell(r.rouge_l));
            cells.push_back(cell(r.overconfidence_ratio));
            cells.push_back(cell(r.noncompliance_rate));
            cells.push_back(fmt::format("{}/{}", r.n_completed, r.n_tasks));
        }
        out += "|";
        for (const auto& c : cells) out += " " + c + " |";
        out += "\n";
    }
    return out;
}

RunComparison compare_runs(const RunRecord& a, const RunRecord& b) {
    std::set<std::string> ia(a.ids.begin(), a.ids.end()), ib(b.ids.begin(), b.ids.end());
    if (ia != ib || ia.size() != a.ids.size() || ib.size() != b.ids.size())
        throw DatasetMismatch("runs cover different task ids");

    RunComparison c;
    auto metric = [&](const char* name, auto get) {
        std::optional<double> va = a.report ? get(*a.report) : std::nullopt;
        std::optional<double> vb = b.report ? get(*b.report) : std::nullopt;
        c.metrics.push_back({name, va, vb});
    };
    using R = const MetricReport&;
    metric("S_final", [](R r) { return r.s_final; });
    metric("S_co", [](R r) { return r.s_co; });
    metric("S_rele", [](R r) { return r.s_rele; });
    metric("S_simi", [](R r) { return r.s_simi; });
    metric("S_c", [](R r) { return std::optional<double>(r.s_c); });
    metric("Pass rate", [](R r) { return std::optional<double>(r.pass_rate); });
    metric("F1", [](R r) { return r.f1; });
    metric("Recall", [](R r) { return r.recall; });
    metric("ROUGE-L", [](R r) { return r.rouge_l; });
    metric("Overconfidence", [](R r) { return r.overconfidence_ratio; });
    metric("Non-compliance", [](R r) { return std::optional<double>(r.noncompliance_rate); });

    std::map<std::string, std::size_t> pos_b;
    for (std::size_t i = 0; i < b.ids.size(); ++i) pos_b[b.ids[i]] = i;
    for (std::size_t i = 0; i < a.ids.size(); ++i) {
        const std::string& id = a.ids[i];
        std::size_t j = pos_b[id];
        if (i < a.traces.size() && j < b.traces.size() && a.traces[i].status != b.traces[j].status)
            c.transitions.push_back({id, a.traces[i].status, b.traces[j].status});
        const auto* sa = i < a.scores.size() && a.scores[i] ? &*a.scores[i] : nullptr;
        const auto* sb = j < b.scores.size() && b.scores[j] ? &*b.scores[j] : nullptr;
        if (sa && sb && sa->s_co && sb->s_co && std::abs(*sb->s_co - *sa->s_co) > 0.2) c.s_co_changed.push_back(id);
    }
    return c;
}

std::string render_comparison(const RunComparison& c) {
    std::string out = "| Metric | A | B | Delta |\n|---|---:|---:|---:|\n";
    for (const auto& m : c.metrics) {
        auto d = m.delta();
        out += fmt::format("| {} | {} | {} | {} |\n", m.name, cell(m.a), cell(m.b), d ? fmt::format("{:+.2f}", *d) : "—");
    }
    out += fmt::format("\nStatus transitions: {}\n", c.transitions.size());
    for (const auto& t : c.transitions) out += fmt::format("  {}: {} -> {}\n", t.id, to_string(t.from), to_string(t.to));
    out += fmt::format("Correctness changed by more than 0.2: {}\n", c.s_co_changed.size());
    for (const auto& id : c.s_co_changed) out += "  " + id + "\n";
    return out;
}

}  // namespace levelnavi
