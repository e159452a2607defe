#pragma once

#include "reprobe/corpus.hpp"
#include "reprobe/icl.hpp"
#include "reprobe/io.hpp"
#include "reprobe/metrics.hpp"
#include "reprobe/models.hpp"
#include "reprobe/perturb.hpp"
#include "reprobe/remote.hpp"
#include "reprobe/svg.hpp"
#include "reprobe/tokens.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace reprobe {

inline constexpr const char* kToolkitVersion = "0.1.0";

enum class ExperimentKind {
    repeat,
    token_pair,
    phrase,
    corpus_pn,
    mmlu_mask,
    mmlu_nc,
    mmlu_ra,
    gsm8k_cot,
    ledger_tally,
};

inline std::string kind_name(ExperimentKind kind) {
    switch (kind) {
    case ExperimentKind::repeat: return "repeat";
    case ExperimentKind::token_pair: return "token-pair";
    case ExperimentKind::phrase: return "phrase";
    case ExperimentKind::corpus_pn: return "corpus-pn";
    case ExperimentKind::mmlu_mask: return "mmlu-mask";
    case ExperimentKind::mmlu_nc: return "mmlu-nc";
    case ExperimentKind::mmlu_ra: return "mmlu-ra";
    case ExperimentKind::gsm8k_cot: return "gsm8k-cot";
    case ExperimentKind::ledger_tally: return "ledger";
    }
    return "?";
}

inline ExperimentKind kind_from_name(const std::string& name) {
    for (ExperimentKind kind :
         {ExperimentKind::repeat, ExperimentKind::token_pair, ExperimentKind::phrase,
          ExperimentKind::corpus_pn, ExperimentKind::mmlu_mask, ExperimentKind::mmlu_nc,
          ExperimentKind::mmlu_ra, ExperimentKind::gsm8k_cot, ExperimentKind::ledger_tally}) {
        if (kind_name(kind) == name) return kind;
    }
    throw ConfigError("unknown experiment kind '" + name + "'");
}

struct AdapterSpec {
    enum class Type { reference, remote } type = Type::reference;
    // reference model
    std::uint32_t vocab_size = 256;
    double alpha = 0.1;
    double kappa = 2.0;
    double mu = 0.5;
    // shared
    std::string vocab_path; // optional external vocab file
    // remote
    RemoteAdapterConfig remote;
};

struct ExperimentParams {
    std::size_t kept_count = 2;   // token-pair probe; != 2 switches to a random mask
    std::size_t distance = 0;     // replaced tokens between the kept pair
    std::size_t phrase_len = 2;   // kept suffix length
    double ratio = 0.5;           // reordered-answers fraction r
    Label target = Label::D;      // NC / RA target label
    std::string phrase = nc_phrase_pool()[0];
    std::vector<std::string> parts;      // mask parts (mmlu/cot), cumulative
    std::string substitute = "none";     // none | option_names | answer_indicator | both
    std::size_t demos = 5;               // max demonstrations K
    std::size_t min_len = 5;             // random sentence bounds
    std::size_t max_len = 10;
    std::size_t prefix_len = 5;
    std::size_t window = 1024;           // corpus T
    std::size_t max_n = 100;
    bool include_zero = false;
    std::string pattern = cot_pattern_default();
    bool first_token = false;            // cot: score only the first pattern token
    std::size_t folds = 5;               // paired t-test folds
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::token_pair;
    AdapterSpec adapter;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::size_t repetitions = 20; // N; the sentence-repeat experiment defaults to 10
    std::size_t samples = 100;
    std::vector<std::string> datasets;
    std::string out_dir = "out";
    bool dump_suites = false;
    std::vector<std::string> formats = {"csv", "json", "svg"}; // emitted output kinds
    ExperimentParams params;
    std::vector<std::string> overridden; // fields set away from their defaults
};

// ---------------------------------------------------------------------------
// config <-> json
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
T take(const nlohmann::json& j, const char* key, const T& fallback, const std::string& context,
       std::vector<std::string>* overridden) {
    if (!j.contains(key)) return fallback;
    try {
        T value = j.at(key).get<T>();
        if (overridden && !(value == fallback)) {
            overridden->push_back(context.empty() ? key : context + "." + key);
        }
        return value;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config field '" + (context.empty() ? key : context + "." + key) +
                          "': " + e.what());
    }
}

} // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& root) {
    // A RunRecord embeds its effective config; accept either form so records
    // re-execute directly.
    const nlohmann::json& j = root.contains("config") && root.at("config").is_object()
                                  ? root.at("config")
                                  : root;
    ExperimentConfig config;
    auto* ov = &config.overridden;
    if (!j.contains("kind")) {
        throw ConfigError("config: missing 'kind'");
    }
    config.kind = kind_from_name(j.at("kind").get<std::string>());
    const std::size_t default_reps = config.kind == ExperimentKind::repeat ? 10 : 20;

    if (j.contains("adapter")) {
        const auto& a = j.at("adapter");
        const std::string type = detail::take<std::string>(a, "type", "reference", "adapter", nullptr);
        if (type == "reference") {
            config.adapter.type = AdapterSpec::Type::reference;
        } else if (type == "remote") {
            config.adapter.type = AdapterSpec::Type::remote;
        } else {
            throw ConfigError("adapter.type must be 'reference' or 'remote'");
        }
        config.adapter.vocab_size =
            detail::take<std::uint32_t>(a, "vocab_size", 256, "adapter", ov);
        config.adapter.alpha = detail::take<double>(a, "alpha", 0.1, "adapter", ov);
        config.adapter.kappa = detail::take<double>(a, "kappa", 2.0, "adapter", ov);
        config.adapter.mu = detail::take<double>(a, "mu", 0.5, "adapter", ov);
        config.adapter.vocab_path =
            detail::take<std::string>(a, "vocab_path", "", "adapter", nullptr);
        config.adapter.remote.endpoint =
            detail::take<std::string>(a, "endpoint", "", "adapter", nullptr);
        config.adapter.remote.batch_size = detail::take<int>(a, "batch_size", 16, "adapter", nullptr);
        config.adapter.remote.max_retries = detail::take<int>(a, "max_retries", 3, "adapter", nullptr);
        config.adapter.remote.parallelism =
            detail::take<unsigned>(a, "parallelism", 1, "adapter", nullptr);
        if (a.contains("timeout_ms")) {
            config.adapter.remote.timeout =
                std::chrono::milliseconds(a.at("timeout_ms").get<std::int64_t>());
        }
    }

    config.seeds = detail::take<std::vector<std::uint64_t>>(j, "seeds", {1, 2, 3}, "", ov);
    config.repetitions = detail::take<std::size_t>(j, "repetitions", default_reps, "", ov);
    config.samples = detail::take<std::size_t>(j, "samples", 100, "", ov);
    config.datasets = detail::take<std::vector<std::string>>(j, "datasets", {}, "", nullptr);
    if (j.contains("dataset")) {
        config.datasets.push_back(j.at("dataset").get<std::string>());
    }
    config.out_dir = detail::take<std::string>(j, "out_dir", "out", "", nullptr);
    config.dump_suites = detail::take<bool>(j, "dump_suites", false, "", nullptr);
    config.formats = detail::take<std::vector<std::string>>(j, "formats", {"csv", "json", "svg"}, "",
                                                            nullptr);

    if (j.contains("params")) {
        const auto& p = j.at("params");
        auto& params = config.params;
        params.kept_count = detail::take<std::size_t>(p, "kept_count", 2, "params", ov);
        params.distance = detail::take<std::size_t>(p, "distance", 0, "params", ov);
        params.phrase_len = detail::take<std::size_t>(p, "phrase_len", 2, "params", ov);
        params.ratio = detail::take<double>(p, "ratio", 0.5, "params", ov);
        params.target = label_from_string(
            detail::take<std::string>(p, "target", "D", "params", ov));
        params.phrase = detail::take<std::string>(p, "phrase", nc_phrase_pool()[0], "params", ov);
        params.parts = detail::take<std::vector<std::string>>(p, "parts", {}, "params", ov);
        params.substitute = detail::take<std::string>(p, "substitute", "none", "params", ov);
        params.demos = detail::take<std::size_t>(p, "demos", 5, "params", ov);
        params.min_len = detail::take<std::size_t>(p, "min_len", 5, "params", ov);
        params.max_len = detail::take<std::size_t>(p, "max_len", 10, "params", ov);
        params.prefix_len = detail::take<std::size_t>(p, "prefix_len", 5, "params", ov);
        params.window = detail::take<std::size_t>(p, "window", 1024, "params", ov);
        params.max_n = detail::take<std::size_t>(p, "max_n", 100, "params", ov);
        params.include_zero = detail::take<bool>(p, "include_zero", false, "params", ov);
        params.pattern = detail::take<std::string>(p, "pattern", cot_pattern_default(), "params", ov);
        params.first_token = detail::take<bool>(p, "first_token", false, "params", ov);
        params.folds = detail::take<std::size_t>(p, "folds", 5, "params", ov);
    }
    return config;
}

inline nlohmann::json config_to_json(const ExperimentConfig& config) {
    nlohmann::json j;
    j["kind"] = kind_name(config.kind);
    nlohmann::json a;
    a["type"] = config.adapter.type == AdapterSpec::Type::reference ? "reference" : "remote";
    a["vocab_size"] = config.adapter.vocab_size;
    a["alpha"] = config.adapter.alpha;
    a["kappa"] = config.adapter.kappa;
    a["mu"] = config.adapter.mu;
    if (!config.adapter.vocab_path.empty()) a["vocab_path"] = config.adapter.vocab_path;
    if (config.adapter.type == AdapterSpec::Type::remote) {
        a["endpoint"] = config.adapter.remote.endpoint;
        a["batch_size"] = config.adapter.remote.batch_size;
        a["max_retries"] = config.adapter.remote.max_retries;
        a["parallelism"] = config.adapter.remote.parallelism;
        a["timeout_ms"] = config.adapter.remote.timeout.count();
    }
    j["adapter"] = std::move(a);
    j["seeds"] = config.seeds;
    j["repetitions"] = config.repetitions;
    j["samples"] = config.samples;
    j["datasets"] = config.datasets;
    j["out_dir"] = config.out_dir;
    j["dump_suites"] = config.dump_suites;
    j["formats"] = config.formats;
    nlohmann::json p;
    p["kept_count"] = config.params.kept_count;
    p["distance"] = config.params.distance;
    p["phrase_len"] = config.params.phrase_len;
    p["ratio"] = config.params.ratio;
    p["target"] = std::string(1, label_char(config.params.target));
    p["phrase"] = config.params.phrase;
    p["parts"] = config.params.parts;
    p["substitute"] = config.params.substitute;
    p["demos"] = config.params.demos;
    p["min_len"] = config.params.min_len;
    p["max_len"] = config.params.max_len;
    p["prefix_len"] = config.params.prefix_len;
    p["window"] = config.params.window;
    p["max_n"] = config.params.max_n;
    p["include_zero"] = config.params.include_zero;
    p["pattern"] = config.params.pattern;
    p["first_token"] = config.params.first_token;
    p["folds"] = config.params.folds;
    j["params"] = std::move(p);
    return j;
}

// Schema and file diagnostics without executing anything.
inline std::vector<std::string> validate_config(const ExperimentConfig& config) {
    std::vector<std::string> diagnostics;
    if (config.seeds.empty()) {
        diagnostics.push_back("seeds: must not be empty");
    }
    if (config.samples == 0) {
        diagnostics.push_back("samples: must be positive");
    }
    if (config.repetitions == 0) {
        diagnostics.push_back("repetitions: must be positive");
    }
    if (config.params.ratio < 0.0 || config.params.ratio > 1.0) {
        diagnostics.push_back("params.ratio: must be in [0,1], got " +
                              std::to_string(config.params.ratio));
    }
    if (config.params.min_len < 1 || config.params.min_len > config.params.max_len) {
        diagnostics.push_back("params.min_len/max_len: need 1 <= min_len <= max_len");
    }
    if (config.params.window < 2) {
        diagnostics.push_back("params.window: must be >= 2");
    }
    if (config.kind == ExperimentKind::token_pair &&
        config.params.min_len < config.params.distance + 2) {
        diagnostics.push_back("params.distance: needs min_len >= distance + 2");
    }
    if (config.kind == ExperimentKind::phrase && config.params.phrase_len > config.params.min_len) {
        diagnostics.push_back("params.phrase_len: must be <= min_len");
    }
    if (config.adapter.type == AdapterSpec::Type::remote &&
        config.adapter.remote.endpoint.empty()) {
        diagnostics.push_back("adapter.endpoint: required for remote adapters");
    }
    if (config.adapter.type == AdapterSpec::Type::reference && config.adapter.vocab_size < 2 &&
        config.adapter.vocab_path.empty()) {
        diagnostics.push_back("adapter.vocab_size: must be >= 2");
    }
    const bool needs_dataset =
        config.kind == ExperimentKind::corpus_pn || config.kind == ExperimentKind::mmlu_mask ||
        config.kind == ExperimentKind::mmlu_nc || config.kind == ExperimentKind::mmlu_ra ||
        config.kind == ExperimentKind::gsm8k_cot || config.kind == ExperimentKind::ledger_tally;
    if (needs_dataset && config.datasets.empty()) {
        diagnostics.push_back("datasets: required for kind " + kind_name(config.kind));
    }
    for (const auto& path : config.datasets) {
        if (path.rfind("zipf:", 0) == 0) continue; // synthetic spec
        if (!std::filesystem::exists(path)) {
            diagnostics.push_back("datasets: file not found: " + path);
        }
    }
    if (!config.adapter.vocab_path.empty() && !std::filesystem::exists(config.adapter.vocab_path)) {
        diagnostics.push_back("adapter.vocab_path: file not found: " + config.adapter.vocab_path);
    }
    return diagnostics;
}

struct RunRecord {
    nlohmann::json config;
    std::string toolkit_version = kToolkitVersion;
    std::string started;
    std::string finished;
    nlohmann::json results;
    nlohmann::json input_hashes;
    std::vector<std::string> outputs;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["toolkit_version"] = toolkit_version;
        j["config"] = config;
        j["started"] = started;
        j["finished"] = finished;
        j["results"] = results;
        j["input_hashes"] = input_hashes;
        j["outputs"] = outputs;
        return j;
    }
};

// ---------------------------------------------------------------------------
// run()
// ---------------------------------------------------------------------------

namespace detail {

inline std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline VocabPtr adapter_vocab(const AdapterSpec& spec) {
    if (!spec.vocab_path.empty()) {
        return load_external_vocab(spec.vocab_path);
    }
    return Vocab::create("synthetic-" + std::to_string(spec.vocab_size), spec.vocab_size);
}

inline std::unique_ptr<ModelAdapter> make_adapter(const AdapterSpec& spec, const VocabPtr& vocab) {
    if (spec.type == AdapterSpec::Type::reference) {
        return std::make_unique<CopyAugmentedModel>(vocab, spec.alpha, spec.kappa, spec.mu);
    }
    return std::make_unique<RemoteModelAdapter>(spec.remote, vocab);
}

inline void check_cancel(const CancelToken* cancel) {
    if (cancel && cancel->is_cancelled()) {
        throw Cancelled();
    }
}

inline MaskSpec probe_mask(const ExperimentConfig& config, std::size_t length, std::uint64_t seed) {
    switch (config.kind) {
    case ExperimentKind::repeat:
        return all_ones_mask(length);
    case ExperimentKind::token_pair:
        // kept_count == 2 probes a controlled-distance pair; any other count
        // probes that many uniformly placed kept tokens
        if (config.params.kept_count == 2) {
            return pair_mask(length, config.params.distance, seed);
        }
        return sample_mask(length, std::min(config.params.kept_count, length), seed);
    case ExperimentKind::phrase:
        return suffix_mask(length, std::min(config.params.phrase_len, length));
    default:
        throw std::invalid_argument("probe_mask: not a probe kind");
    }
}

inline SuiteFamily build_probe_family(const ExperimentConfig& config, const VocabPtr& vocab,
                                      std::uint64_t seed, const CancelToken* cancel) {
    SuiteFamily family;
    for (std::size_t n = 1; n <= config.repetitions; ++n) {
        family.n_values.push_back(n);
    }
    const TokenSeq separator = default_separator(vocab);
    for (std::size_t i = 0; i < config.samples; ++i) {
        if ((i & 63) == 0) check_cancel(cancel);
        const std::uint64_t s = derive_seed(seed, i);
        auto sentence =
            random_sentence(vocab, config.params.min_len, config.params.max_len, derive_seed(s, 0));
        auto prefix =
            random_sentence(vocab, config.params.prefix_len, config.params.prefix_len,
                            derive_seed(s, 1));
        auto mask = probe_mask(config, sentence.size(), derive_seed(s, 2));
        family.per_sentence.push_back(build_perturbed_family(
            sentence, mask, config.repetitions, derive_seed(s, 3), prefix, separator));
    }
    return family;
}

inline ReinforcementCurve aggregate_across_seeds(const std::vector<ReinforcementCurve>& curves) {
    ReinforcementCurve out;
    out.n_values = curves.front().n_values;
    out.sample_count = curves.size();
    const std::size_t points = out.n_values.size();
    out.mean_tp.resize(points);
    out.std_tp.resize(points);
    for (std::size_t i = 0; i < points; ++i) {
        double sum = 0.0;
        for (const auto& c : curves) sum += c.mean_tp[i];
        const double mean = sum / static_cast<double>(curves.size());
        double var = 0.0;
        for (const auto& c : curves) {
            const double d = c.mean_tp[i] - mean;
            var += d * d;
        }
        out.mean_tp[i] = mean;
        out.std_tp[i] = std::sqrt(var / static_cast<double>(curves.size()));
    }
    return out;
}

inline Series curve_series(const ReinforcementCurve& curve, std::string label) {
    Series s;
    s.label = std::move(label);
    for (std::size_t i = 0; i < curve.n_values.size(); ++i) {
        s.x.push_back(static_cast<double>(curve.n_values[i]));
        s.y.push_back(curve.mean_tp[i]);
        s.band.push_back(curve.std_tp[i]);
    }
    return s;
}

inline nlohmann::json curve_json(const ReinforcementCurve& curve) {
    nlohmann::json j;
    j["n"] = curve.n_values;
    j["mean"] = curve.mean_tp;
    j["std"] = curve.std_tp;
    j["samples"] = curve.sample_count;
    return j;
}

struct OutputWriter {
    std::filesystem::path dir;
    std::vector<std::string>* outputs;
    const std::vector<std::string>* formats = nullptr; // nullptr = everything

    void write(const std::string& name, std::string_view content) const {
        if (formats) {
            const auto dot = name.rfind('.');
            const std::string ext = dot == std::string::npos ? "" : name.substr(dot + 1);
            bool wanted = ext == "tok" || ext == "jsonl"; // data artifacts always land
            for (const auto& f : *formats) {
                if (f == ext) wanted = true;
            }
            if (!wanted) return;
        }
        atomic_write_file((dir / name).string(), content);
        outputs->push_back(name);
    }
};

} // namespace detail

inline RunRecord run(const ExperimentConfig& config, const CancelToken* cancel = nullptr);

namespace detail {

// --- probe kinds (repeat / token-pair / phrase) ----------------------------

inline nlohmann::json run_probe(const ExperimentConfig& config, const OutputWriter& out,
                                const CancelToken* cancel) {
    const VocabPtr vocab = adapter_vocab(config.adapter);
    const auto adapter = make_adapter(config.adapter, vocab);
    const unsigned parallelism = adapter->max_parallel_scores();

    nlohmann::json per_seed = nlohmann::json::array();
    std::vector<ReinforcementCurve> curves;
    for (std::size_t si = 0; si < config.seeds.size(); ++si) {
        check_cancel(cancel);
        const std::uint64_t seed = config.seeds[si];
        auto family = build_probe_family(config, vocab, seed, cancel);
        if (config.dump_suites && si == 0) {
            std::ostringstream buffer;
            for (const auto& row : family.per_sentence) {
                write_suites_jsonl(buffer, row);
            }
            out.write("suites.jsonl", buffer.str());
        }
        auto curve_for_seed = curve(*adapter, family, parallelism, cancel);
        out.write("curve_seed" + std::to_string(seed) + ".csv", curve_to_csv(curve_for_seed));
        nlohmann::json j;
        j["seed"] = seed;
        j["curve"] = curve_json(curve_for_seed);
        per_seed.push_back(std::move(j));
        curves.push_back(std::move(curve_for_seed));
    }

    auto aggregate = aggregate_across_seeds(curves);
    out.write("curve.csv", curve_to_csv(aggregate));
    ChartOptions chart;
    chart.title = kind_name(config.kind) + std::string(" probe");
    chart.x_label = "occurrences n";
    chart.y_label = "mean kept-token probability";
    const Series series[] = {curve_series(aggregate, "mean over seeds")};
    out.write("curve.svg", render_line_chart(series, chart));

    nlohmann::json results;
    results["per_seed"] = std::move(per_seed);
    results["aggregate"] = curve_json(aggregate);
    return results;
}

// --- corpus-pn --------------------------------------------------------------

inline std::vector<CorpusShard> resolve_corpus_shards(const ExperimentConfig& config,
                                                      const OutputWriter& out) {
    std::vector<CorpusShard> shards;
    for (std::size_t i = 0; i < config.datasets.size(); ++i) {
        const std::string& path = config.datasets[i];
        if (path.rfind("zipf:", 0) == 0) {
            // "zipf:<tokens>:<types>:<exponent>" synthetic corpus
            std::size_t tokens = 0, types = 0;
            double exponent = 0.0;
            if (std::sscanf(path.c_str(), "zipf:%zu:%zu:%lf", &tokens, &types, &exponent) != 3) {
                throw ConfigError("bad synthetic corpus spec '" + path + "'");
            }
            const auto ids = zipf_tokens(tokens, types, exponent, config.seeds.front());
            const std::string name = "zipf_" + std::to_string(i) + ".tok";
            write_token_file((out.dir / name).string(), "zipf", ids);
            out.outputs->push_back(name);
            shards.push_back(open_shard((out.dir / name).string()));
        } else if (path.size() > 4 && path.compare(path.size() - 4, 4, ".tok") == 0) {
            shards.push_back(open_shard(path));
        } else {
            // text mode: byte-tokenize into a sibling shard in the out dir
            ByteTokenizer tok;
            const std::string name = "ingested_" + std::to_string(i) + ".tok";
            shards.push_back(ingest_text(path, (out.dir / name).string(), tok));
            out.outputs->push_back(name);
        }
    }
    return shards;
}

inline nlohmann::json run_corpus_pn(const ExperimentConfig& config, const OutputWriter& out,
                                    const CancelToken* cancel) {
    check_cancel(cancel);
    auto shards = resolve_corpus_shards(config, out);
    PnOptions opts{.window = config.params.window,
                   .max_n = config.params.max_n,
                   .include_zero = config.params.include_zero};
    const unsigned parallelism = std::max(1u, std::thread::hardware_concurrency());
    auto acc = pn_corpus(shards, opts, parallelism);
    check_cancel(cancel);
    auto report = pn_report(acc);
    out.write("pn.csv", report.csv());

    if (!report.rows.empty()) {
        Series s;
        s.label = "P_n";
        for (const auto& row : report.rows) {
            s.x.push_back(static_cast<double>(row.n));
            s.y.push_back(row.p_n);
        }
        ChartOptions chart;
        chart.title = "recurrence probability by prior occurrences";
        chart.x_label = "prior occurrences n";
        chart.y_label = "P_n";
        const Series series[] = {s};
        out.write("pn.svg", render_line_chart(series, chart));
    }

    nlohmann::json results;
    results["tokens"] = acc.tokens_seen();
    results["rows"] = nlohmann::json::array();
    for (const auto& row : report.rows) {
        results["rows"].push_back({{"n", row.n}, {"p_n", row.p_n}, {"trials", row.trials}});
    }
    results["omitted_zero_trial_rows"] = report.omitted_zero_trial_rows;
    return results;
}

// --- MMLU kinds -------------------------------------------------------------

struct MmluWorkspace {
    std::vector<MmluItem> items;
    std::shared_ptr<WhitespaceTokenizer> tokenizer;
    std::array<TokenId, 4> label_ids{};
};

inline MmluWorkspace mmlu_workspace(const ExperimentConfig& config) {
    if (config.datasets.empty()) {
        throw ConfigError("mmlu experiments need a dataset");
    }
    std::ifstream in(config.datasets.front());
    if (!in) {
        throw DataError("cannot open dataset '" + config.datasets.front() + "'");
    }
    MmluWorkspace ws;
    ws.items = load_mmlu_jsonl(in);
    if (ws.items.size() < 4) {
        throw DataError("dataset '" + config.datasets.front() +
                        "': need at least 4 items to balance the test set");
    }

    std::vector<std::string> texts;
    texts.reserve(ws.items.size() + 8);
    for (const auto& item : ws.items) {
        texts.push_back(render_mmlu(item, true));
    }
    std::vector<std::string> extra = {"A", "B", "C", "D"};
    for (const auto& set : SubstitutePool::defaults().option_name_sets) {
        for (const auto& name : set) extra.push_back(name);
    }
    for (const auto& ind : SubstitutePool::defaults().answer_indicators) {
        extra.push_back(ind);
    }
    for (const auto& phrase : nc_phrase_pool()) {
        texts.push_back(phrase);
    }
    texts.push_back(config.params.phrase);
    ws.tokenizer = WhitespaceTokenizer::build(texts, extra, "mmlu-words");
    for (int c = 0; c < 4; ++c) {
        ws.label_ids[c] = ws.tokenizer->tokenize(std::string(1, static_cast<char>('A' + c)))[0];
    }
    return ws;
}

inline std::vector<std::size_t> draw_demo_indices(std::size_t pool, std::size_t skip, std::size_t k,
                                                  SplitMix64& rng) {
    if (pool <= k) {
        throw DataError("need more dataset items (" + std::to_string(pool) +
                        ") than demonstrations (" + std::to_string(k) + ")");
    }
    std::vector<std::size_t> picked;
    picked.reserve(k);
    while (picked.size() < k) {
        const std::size_t candidate = static_cast<std::size_t>(rng.below(pool));
        if (candidate == skip) continue;
        bool dup = false;
        for (std::size_t p : picked) {
            if (p == candidate) dup = true;
        }
        if (!dup) picked.push_back(candidate);
    }
    return picked;
}

inline Label predict_label(const ModelAdapter& adapter, const MmluWorkspace& ws,
                           const std::string& run_text) {
    const auto context = ws.tokenizer->tokenize(run_text);
    const auto dist = adapter.next_dist(context);
    int best = 0;
    for (int c = 1; c < 4; ++c) {
        if (dist[ws.label_ids[c]] > dist[ws.label_ids[best]]) best = c;
    }
    return static_cast<Label>(best);
}

inline MmluMaskParts parse_mmlu_parts(const std::vector<std::string>& parts) {
    MmluMaskParts out;
    for (const auto& part : parts) {
        if (part == "question") {
            out.question = true;
        } else if (part == "option_content") {
            out.option_content = true;
        } else {
            throw ConfigError("unknown mmlu mask part '" + part + "'");
        }
    }
    return out;
}

inline std::optional<FormattingTarget> parse_substitute(const std::string& substitute) {
    if (substitute == "none") return std::nullopt;
    if (substitute == "option_names") return FormattingTarget::option_names;
    if (substitute == "answer_indicator") return FormattingTarget::answer_indicator;
    if (substitute == "both") return FormattingTarget::both;
    throw ConfigError("unknown substitute target '" + substitute + "'");
}

// Label-space probability vs number of demonstrations, under the configured
// masking/substitution of demonstrations.
inline nlohmann::json run_mmlu_mask(const ExperimentConfig& config, const OutputWriter& out,
                                    const CancelToken* cancel) {
    auto ws = mmlu_workspace(config);
    const auto adapter = make_adapter(config.adapter, ws.tokenizer->vocab());
    const auto mask_parts = config.params.parts.empty()
                                ? std::optional<MmluMaskParts>{}
                                : std::optional<MmluMaskParts>{parse_mmlu_parts(config.params.parts)};
    const auto substitute = parse_substitute(config.params.substitute);
    const std::size_t max_k = config.params.demos;

    std::vector<ReinforcementCurve> curves;
    nlohmann::json per_seed = nlohmann::json::array();
    std::size_t balance_trimmed = 0;
    bool emitted_balanced = false;
    for (std::uint64_t seed : config.seeds) {
        check_cancel(cancel);
        auto balance = balance_test_set(ws.items, derive_seed(seed, 0));
        auto& balanced = balance.items;
        balance_trimmed = balance.trimmed;
        if (!emitted_balanced) {
            std::ostringstream buffer;
            write_mmlu_jsonl(buffer, balanced,
                             {{"transform", "balance_test_set"}, {"seed", seed}});
            out.write("balanced.jsonl", buffer.str());
            emitted_balanced = true;
        }
        const std::size_t queries = std::min(config.samples, balanced.size());
        // matrix[sample][k]
        std::vector<std::vector<double>> values(queries, std::vector<double>(max_k + 1, 0.0));
        for (std::size_t q = 0; q < queries; ++q) {
            if ((q & 15) == 0) check_cancel(cancel);
            SplitMix64 rng(derive_seed(seed, 1000 + q));
            auto demo_idx = draw_demo_indices(balanced.size(), q, max_k, rng);
            std::vector<MmluItem> demos;
            for (std::size_t idx : demo_idx) {
                demos.push_back(balanced[idx]);
            }
            if (mask_parts) {
                for (auto& demo : demos) {
                    demo = mask_mmlu_parts(demo, *mask_parts, *ws.tokenizer, rng.next());
                }
            }
            if (substitute) {
                demos = substitute_formatting(std::move(demos), *substitute,
                                              SubstitutePool::defaults(), rng.next());
            }
            for (std::size_t k = 0; k <= max_k; ++k) {
                const auto context = ws.tokenizer->tokenize(
                    mmlu_run_text(std::span(demos.data(), k), balanced[q]));
                values[q][k] = label_space_probability(*adapter, context, ws.label_ids);
            }
        }
        std::vector<std::size_t> ks(max_k + 1);
        std::iota(ks.begin(), ks.end(), 0);
        auto curve_for_seed = curve_from_matrix(ks, values);
        out.write("labelspace_seed" + std::to_string(seed) + ".csv", curve_to_csv(curve_for_seed));
        per_seed.push_back({{"seed", seed}, {"curve", curve_json(curve_for_seed)}});
        curves.push_back(std::move(curve_for_seed));
    }

    auto aggregate = aggregate_across_seeds(curves);
    out.write("labelspace.csv", curve_to_csv(aggregate));
    ChartOptions chart;
    chart.title = "label-space probability vs demonstrations";
    chart.x_label = "demonstrations";
    chart.y_label = "P(A or B or C or D)";
    const Series series[] = {curve_series(aggregate, "label space")};
    out.write("labelspace.svg", render_line_chart(series, chart));

    nlohmann::json results;
    results["per_seed"] = std::move(per_seed);
    results["aggregate"] = curve_json(aggregate);
    results["balance_trimmed"] = balance_trimmed;
    return results;
}

// Shared loop for the NC and RA detriment experiments: per k, per item,
// evaluate baseline and treated runs, fold into accuracies and paired t-tests.
inline nlohmann::json run_mmlu_detriment(const ExperimentConfig& config, const OutputWriter& out,
                                         const CancelToken* cancel, bool reorder) {
    auto ws = mmlu_workspace(config);
    const auto adapter = make_adapter(config.adapter, ws.tokenizer->vocab());
    const std::size_t max_k = config.params.demos;
    const Label target = config.params.target;
    const std::size_t folds = std::max<std::size_t>(2, config.params.folds);

    struct Row {
        std::size_t k;
        double avg_abc_base, avg_abc_treated, d_base, d_treated;
        double p_abc, p_d;
        ClassAccuracyTable base_table, treated_table;
    };
    std::vector<Row> rows;
    nlohmann::json per_seed = nlohmann::json::array();

    bool emitted_balanced = false;
    std::size_t balance_trimmed = 0;
    // fold accuracies pooled across seeds, per k
    for (std::size_t k = 0; k <= max_k; ++k) {
        std::vector<std::pair<Label, Label>> base_preds, treated_preds;
        std::vector<double> base_abc_folds, treated_abc_folds, base_d_folds, treated_d_folds;
        for (std::uint64_t seed : config.seeds) {
            check_cancel(cancel);
            auto balance = balance_test_set(ws.items, derive_seed(seed, 0));
            auto& balanced = balance.items;
            balance_trimmed = balance.trimmed;
            if (!emitted_balanced) {
                std::ostringstream buffer;
                write_mmlu_jsonl(buffer, balanced,
                                 {{"transform", "balance_test_set"}, {"seed", seed}});
                out.write("balanced.jsonl", buffer.str());
                emitted_balanced = true;
            }
            const std::size_t queries = std::min(config.samples, balanced.size());
            std::vector<std::pair<Label, Label>> base_seed, treated_seed;
            for (std::size_t q = 0; q < queries; ++q) {
                if ((q & 15) == 0) check_cancel(cancel);
                SplitMix64 rng(derive_seed(seed, 5000 + q));
                auto demo_idx = draw_demo_indices(balanced.size(), q, max_k, rng);
                std::vector<MmluItem> demos;
                for (std::size_t i = 0; i < k; ++i) {
                    demos.push_back(balanced[demo_idx[i]]);
                }
                const std::uint64_t transform_seed = rng.next();

                MmluRun base_run{demos, balanced[q]};
                Label predicted = predict_label(*adapter, ws, mmlu_run_text(base_run.demos, base_run.query));
                base_seed.emplace_back(balanced[q].gold, predicted);

                MmluRun treated_run{demos, balanced[q]};
                if (reorder) {
                    treated_run.demos =
                        reorder_answers(std::move(treated_run.demos), config.params.ratio, target,
                                        transform_seed);
                } else {
                    treated_run = inject_noninformative(std::move(treated_run), config.params.phrase,
                                                        target);
                }
                Label treated_pred =
                    predict_label(*adapter, ws, mmlu_run_text(treated_run.demos, treated_run.query));
                treated_seed.emplace_back(balanced[q].gold, treated_pred);
            }
            // seeded fold split: queries are already shuffled by balancing
            for (std::size_t f = 0; f < folds; ++f) {
                const std::size_t begin = f * base_seed.size() / folds;
                const std::size_t end = (f + 1) * base_seed.size() / folds;
                std::size_t abc_total = 0, abc_ok_base = 0, abc_ok_treated = 0;
                std::size_t d_total = 0, d_ok_base = 0, d_ok_treated = 0;
                for (std::size_t i = begin; i < end; ++i) {
                    const bool is_target = base_seed[i].first == target;
                    if (is_target) {
                        ++d_total;
                        if (base_seed[i].second == base_seed[i].first) ++d_ok_base;
                        if (treated_seed[i].second == treated_seed[i].first) ++d_ok_treated;
                    } else {
                        ++abc_total;
                        if (base_seed[i].second == base_seed[i].first) ++abc_ok_base;
                        if (treated_seed[i].second == treated_seed[i].first) ++abc_ok_treated;
                    }
                }
                if (abc_total > 0) {
                    base_abc_folds.push_back(static_cast<double>(abc_ok_base) / abc_total);
                    treated_abc_folds.push_back(static_cast<double>(abc_ok_treated) / abc_total);
                }
                if (d_total > 0) {
                    base_d_folds.push_back(static_cast<double>(d_ok_base) / d_total);
                    treated_d_folds.push_back(static_cast<double>(d_ok_treated) / d_total);
                }
            }
            base_preds.insert(base_preds.end(), base_seed.begin(), base_seed.end());
            treated_preds.insert(treated_preds.end(), treated_seed.begin(), treated_seed.end());
        }

        // tiny runs can leave a class with fewer than two populated folds; no
        // evidence means p = 1 rather than a hard failure
        auto safe_ttest = [](std::span<const double> base, std::span<const double> treated) {
            if (base.size() < 2) {
                return PairedTTestResult{0.0, 1.0, static_cast<int>(base.size()), false};
            }
            return paired_ttest(base, treated);
        };
        const auto base_table = class_accuracy(base_preds);
        const auto treated_table = class_accuracy(treated_preds);
        const auto abc_test = safe_ttest(base_abc_folds, treated_abc_folds);
        const auto d_test = safe_ttest(base_d_folds, treated_d_folds);
        rows.push_back({k, base_table.avg_abc, treated_table.avg_abc,
                        base_table.accuracy(target), treated_table.accuracy(target), abc_test.p_value,
                        d_test.p_value, base_table, treated_table});
    }

    std::string csv = "demos,avg_abc_base,avg_abc_treated,target_base,target_treated,p_abc,p_target\n";
    for (const auto& row : rows) {
        csv += std::to_string(row.k) + ',' + detail::format_double(row.avg_abc_base) + ',' +
               detail::format_double(row.avg_abc_treated) + ',' + detail::format_double(row.d_base) +
               ',' + detail::format_double(row.d_treated) + ',' + detail::format_double(row.p_abc) +
               ',' + detail::format_double(row.p_d) + '\n';
    }
    out.write("accuracy.csv", csv);

    Series abc_base{"avg ABC baseline", {}, {}, {}}, abc_treated{"avg ABC treated", {}, {}, {}};
    Series d_base{"target baseline", {}, {}, {}}, d_treated{"target treated", {}, {}, {}};
    for (const auto& row : rows) {
        const double x = static_cast<double>(row.k);
        abc_base.x.push_back(x);
        abc_base.y.push_back(row.avg_abc_base);
        abc_treated.x.push_back(x);
        abc_treated.y.push_back(row.avg_abc_treated);
        d_base.x.push_back(x);
        d_base.y.push_back(row.d_base);
        d_treated.x.push_back(x);
        d_treated.y.push_back(row.d_treated);
    }
    ChartOptions chart;
    chart.title = reorder ? "reordered answers" : "non-informative connections";
    chart.x_label = "demonstrations";
    chart.y_label = "accuracy";
    const Series series[] = {abc_base, abc_treated, d_base, d_treated};
    out.write("accuracy.svg", render_line_chart(series, chart));

    nlohmann::json results;
    results["rows"] = nlohmann::json::array();
    for (const auto& row : rows) {
        auto per_class = [](const ClassAccuracyTable& table) {
            return nlohmann::json{{"A", table.acc[0]},
                                  {"B", table.acc[1]},
                                  {"C", table.acc[2]},
                                  {"D", table.acc[3]},
                                  {"overall", table.overall}};
        };
        results["rows"].push_back({{"demos", row.k},
                                   {"avg_abc_base", row.avg_abc_base},
                                   {"avg_abc_treated", row.avg_abc_treated},
                                   {"target_base", row.d_base},
                                   {"target_treated", row.d_treated},
                                   {"p_abc", row.p_abc},
                                   {"p_target", row.p_d},
                                   {"per_class_base", per_class(row.base_table)},
                                   {"per_class_treated", per_class(row.treated_table)}});
    }
    results["balance_trimmed"] = balance_trimmed;
    return results;
}

// --- GSM8K CoT --------------------------------------------------------------

inline std::vector<CotPart> parse_cot_parts(const std::vector<std::string>& parts) {
    std::vector<CotPart> out;
    for (const auto& part : parts) {
        if (part == "question" || part == "question_content") {
            out.push_back(CotPart::question_content);
        } else if (part == "question_tag") {
            out.push_back(CotPart::question_tag);
        } else if (part == "newline" || part == "newline_marker") {
            out.push_back(CotPart::newline_marker);
        } else {
            throw ConfigError("unknown cot mask part '" + part + "'");
        }
    }
    return out;
}

inline nlohmann::json run_gsm8k_cot(const ExperimentConfig& config, const OutputWriter& out,
                                    const CancelToken* cancel) {
    if (config.datasets.empty()) {
        throw ConfigError("gsm8k-cot needs a dataset");
    }
    std::ifstream in(config.datasets.front());
    if (!in) {
        throw DataError("cannot open dataset '" + config.datasets.front() + "'");
    }
    auto demos_pool = load_gsm8k_jsonl(in);
    if (demos_pool.size() < 2) {
        throw DataError("gsm8k dataset: need at least 2 items");
    }
    std::vector<std::string> texts = {"Question: //", config.params.pattern};
    for (const auto& d : demos_pool) {
        texts.push_back(d.question);
        texts.push_back(d.cot_answer);
    }
    auto tokenizer = WhitespaceTokenizer::build(texts, {}, "gsm8k-words");
    const auto adapter = make_adapter(config.adapter, tokenizer->vocab());
    const auto mask_parts = parse_cot_parts(config.params.parts);
    const std::size_t max_k = config.params.demos;

    std::vector<ReinforcementCurve> curves;
    nlohmann::json per_seed = nlohmann::json::array();
    for (std::uint64_t seed : config.seeds) {
        check_cancel(cancel);
        const std::size_t queries = std::min(config.samples, demos_pool.size());
        std::vector<std::vector<double>> values(queries, std::vector<double>(max_k + 1, 0.0));
        for (std::size_t q = 0; q < queries; ++q) {
            if ((q & 15) == 0) check_cancel(cancel);
            SplitMix64 rng(derive_seed(seed, 9000 + q));
            auto demo_idx = draw_demo_indices(demos_pool.size(), q, max_k, rng);
            for (std::size_t k = 0; k <= max_k; ++k) {
                std::vector<CotDemo> demos;
                for (std::size_t i = 0; i < k; ++i) {
                    demos.push_back(demos_pool[demo_idx[i]]);
                }
                auto probe = cot_probe(demos, demos_pool[q].question, mask_parts,
                                       config.params.pattern, *tokenizer, rng.next());
                std::vector<std::size_t> positions = probe.pattern_positions;
                if (config.params.first_token) {
                    positions = {probe.first_token_position()};
                }
                const auto scored = adapter->score(probe.context, positions);
                double sum = 0.0;
                for (std::size_t p : positions) sum += scored.at(p);
                values[q][k] = sum / static_cast<double>(positions.size());
            }
        }
        std::vector<std::size_t> ks(max_k + 1);
        std::iota(ks.begin(), ks.end(), 0);
        auto curve_for_seed = curve_from_matrix(ks, values);
        out.write("cot_seed" + std::to_string(seed) + ".csv", curve_to_csv(curve_for_seed));
        per_seed.push_back({{"seed", seed}, {"curve", curve_json(curve_for_seed)}});
        curves.push_back(std::move(curve_for_seed));
    }

    auto aggregate = aggregate_across_seeds(curves);
    out.write("cot.csv", curve_to_csv(aggregate));
    ChartOptions chart;
    chart.title = "CoT pattern probability vs demonstrations";
    chart.x_label = "demonstrations";
    chart.y_label = "mean pattern probability";
    const Series series[] = {curve_series(aggregate, "pattern")};
    out.write("cot.svg", render_line_chart(series, chart));

    nlohmann::json results;
    results["per_seed"] = std::move(per_seed);
    results["aggregate"] = curve_json(aggregate);
    return results;
}

// --- ledger ------------------------------------------------------------------

inline nlohmann::json run_ledger(const ExperimentConfig& config, const OutputWriter& out,
                                 const CancelToken* cancel) {
    if (config.datasets.empty()) {
        throw ConfigError("ledger needs a dataset");
    }
    check_cancel(cancel);
    const std::string& path = config.datasets.front();
    std::vector<Demonstration> demos;
    VocabPtr vocab;
    if (path.size() > 6 && path.compare(path.size() - 6, 6, ".jsonl") == 0) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open dataset '" + path + "'");
        auto items = load_mmlu_jsonl(in);
        std::vector<std::string> texts;
        for (const auto& item : items) texts.push_back(render_mmlu(item, true));
        auto tok = WhitespaceTokenizer::build(texts, {"A", "B", "C", "D"}, "ledger-words");
        vocab = tok->vocab();
        const TokenSeq empty(vocab, {});
        for (const auto& item : items) {
            demos.push_back({empty, tok->tokenize(render_mmlu(item, false)), empty,
                             tok->tokenize(std::string(1, label_char(item.gold)))});
        }
    } else {
        // plain text: one demonstration per line, whitespace tokens
        const std::string content = read_file(path);
        std::vector<std::string> lines;
        std::istringstream stream(content);
        std::string line;
        while (std::getline(stream, line)) {
            if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
        }
        if (lines.empty()) throw DataError("dataset '" + path + "': no demonstrations");
        auto tok = WhitespaceTokenizer::build(lines, {}, "ledger-words");
        vocab = tok->vocab();
        const TokenSeq empty(vocab, {});
        for (const auto& l : lines) {
            demos.push_back({empty, tok->tokenize(l), empty, empty});
        }
    }

    auto entries = ledger(demos);
    std::string csv = "source,target,source_text,target_text,successive,distant,total\n";
    auto quoted = [&](TokenId id) {
        auto t = vocab->text_of(id);
        std::string text = t ? *t : std::string();
        std::string escaped = "\"";
        for (char c : text) {
            if (c == '"') escaped += '"';
            escaped += c;
        }
        escaped += '"';
        return escaped;
    };
    for (const auto& e : entries) {
        csv += std::to_string(e.source) + ',' + std::to_string(e.target) + ',' + quoted(e.source) +
               ',' + quoted(e.target) + ',' + std::to_string(e.successive_count) + ',' +
               std::to_string(e.distant_count) + ',' + std::to_string(e.total()) + '\n';
    }
    out.write("ledger.csv", csv);

    nlohmann::json results;
    results["entries"] = entries.size();
    results["demos"] = demos.size();
    nlohmann::json top = nlohmann::json::array();
    for (std::size_t i = 0; i < std::min<std::size_t>(entries.size(), 20); ++i) {
        top.push_back({{"source", entries[i].source},
                       {"target", entries[i].target},
                       {"successive", entries[i].successive_count},
                       {"distant", entries[i].distant_count}});
    }
    results["top"] = std::move(top);
    return results;
}

} // namespace detail

// Executes one experiment, writes its outputs atomically under out_dir, and
// returns (and writes) the run record. Cancellation leaves a PARTIAL marker
// and no half-written outputs.
inline RunRecord run(const ExperimentConfig& config, const CancelToken* cancel) {
    {
        auto diagnostics = validate_config(config);
        if (!diagnostics.empty()) {
            std::string message = "invalid config:";
            for (const auto& d : diagnostics) message += "\n  " + d;
            throw ConfigError(message);
        }
    }
    std::filesystem::create_directories(config.out_dir);

    RunRecord record;
    record.config = config_to_json(config);
    record.config["overridden"] = config.overridden;
    record.started = detail::timestamp_utc();
    for (const auto& path : config.datasets) {
        if (path.rfind("zipf:", 0) != 0) {
            record.input_hashes[path] = file_hash(path);
        }
    }

    detail::OutputWriter out{config.out_dir, &record.outputs, &config.formats};
    try {
        switch (config.kind) {
        case ExperimentKind::repeat:
        case ExperimentKind::token_pair:
        case ExperimentKind::phrase:
            record.results = detail::run_probe(config, out, cancel);
            break;
        case ExperimentKind::corpus_pn:
            record.results = detail::run_corpus_pn(config, out, cancel);
            break;
        case ExperimentKind::mmlu_mask:
            record.results = detail::run_mmlu_mask(config, out, cancel);
            break;
        case ExperimentKind::mmlu_nc:
            record.results = detail::run_mmlu_detriment(config, out, cancel, false);
            break;
        case ExperimentKind::mmlu_ra:
            record.results = detail::run_mmlu_detriment(config, out, cancel, true);
            break;
        case ExperimentKind::gsm8k_cot:
            record.results = detail::run_gsm8k_cot(config, out, cancel);
            break;
        case ExperimentKind::ledger_tally:
            record.results = detail::run_ledger(config, out, cancel);
            break;
        }
    } catch (const Cancelled&) {
        atomic_write_file((std::filesystem::path(config.out_dir) / "PARTIAL").string(),
                          "run cancelled at " + detail::timestamp_utc() + "\n");
        throw;
    }

    record.finished = detail::timestamp_utc();
    atomic_write_file((std::filesystem::path(config.out_dir) / "run.json").string(),
                      record.to_json().dump(2) + "\n");
    record.outputs.push_back("run.json");
    return record;
}

inline RunRecord rerun_from_record(const std::string& record_path, const std::string& out_dir,
                                   const CancelToken* cancel = nullptr) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(record_path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("run record '" + record_path + "': " + e.what());
    }
    auto config = config_from_json(j);
    if (!out_dir.empty()) {
        config.out_dir = out_dir;
    }
    return run(config, cancel);
}

} // namespace reprobe
