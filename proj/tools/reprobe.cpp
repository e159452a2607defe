// reprobe: repeated/perturbed context probes, corpus recurrence statistics,
// and MMLU/GSM8K demonstration manipulations against a pluggable scoring
// adapter (built-in reference model or a remote logprob server).

#include "reprobe/io.hpp"
#include "reprobe/runner.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <iostream>

namespace {

reprobe::CancelToken g_cancel;

void handle_sigint(int) { g_cancel.cancel(); }

struct CommonFlags {
    std::string config_path;
    std::vector<std::uint64_t> seeds;
    std::string adapter;
    std::string out_dir;
    std::vector<std::string> formats;
    std::size_t samples = 0;
    std::size_t repetitions = 0;
    std::vector<std::string> datasets;
    bool dump_suites = false;
    // reference adapter knobs
    std::uint32_t vocab_size = 0;
    double alpha = -1.0, kappa = -1.0, mu = -1.0;
    std::string vocab_path;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON config (or a previous run.json) to start from");
    cmd->add_option("--seed", flags.seeds, "random seeds (repeatable; default 1 2 3)");
    cmd->add_option("--adapter", flags.adapter, "reference | remote:URL");
    cmd->add_option("--out-dir", flags.out_dir, "output directory");
    cmd->add_option("--format", flags.formats, "output formats to emit: csv json svg");
    cmd->add_option("--samples", flags.samples, "number of sampled sentences/queries");
    cmd->add_option("--repetitions,-n", flags.repetitions, "repetitions N");
    cmd->add_option("--dataset", flags.datasets, "input dataset path(s)");
    cmd->add_flag("--dump-suites", flags.dump_suites, "write probe suites as JSONL for replay");
    cmd->add_option("--vocab-size", flags.vocab_size, "reference adapter vocab size");
    cmd->add_option("--alpha", flags.alpha, "reference model smoothing");
    cmd->add_option("--kappa", flags.kappa, "reference model copy-confidence constant");
    cmd->add_option("--mu", flags.mu, "reference model recurrence mix");
    cmd->add_option("--vocab", flags.vocab_path, "external vocab file");
}

reprobe::ExperimentConfig assemble(const CLI::App* cmd, const CommonFlags& flags,
                                   reprobe::ExperimentKind kind) {
    reprobe::ExperimentConfig config;
    if (!flags.config_path.empty()) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(reprobe::read_file(flags.config_path));
        } catch (const nlohmann::json::exception& e) {
            throw reprobe::ConfigError("config '" + flags.config_path + "': " + e.what());
        }
        config = reprobe::config_from_json(j);
    } else {
        config.kind = kind;
        config.repetitions = kind == reprobe::ExperimentKind::repeat ? 10 : 20;
    }
    config.kind = kind;

    auto passed = [&](const std::string& name) { return cmd->count(name) > 0; };
    if (passed("--seed")) {
        config.seeds = flags.seeds;
        config.overridden.push_back("seeds");
    }
    if (passed("--adapter")) {
        if (flags.adapter == "reference") {
            config.adapter.type = reprobe::AdapterSpec::Type::reference;
        } else if (flags.adapter.rfind("remote:", 0) == 0) {
            config.adapter.type = reprobe::AdapterSpec::Type::remote;
            config.adapter.remote.endpoint = flags.adapter.substr(7);
        } else {
            throw reprobe::ConfigError("--adapter must be 'reference' or 'remote:URL'");
        }
    }
    if (passed("--out-dir")) config.out_dir = flags.out_dir;
    if (passed("--format")) config.formats = flags.formats;
    if (passed("--samples")) {
        config.samples = flags.samples;
        config.overridden.push_back("samples");
    }
    if (passed("--repetitions")) {
        config.repetitions = flags.repetitions;
        config.overridden.push_back("repetitions");
    }
    if (passed("--dataset")) config.datasets = flags.datasets;
    if (passed("--dump-suites")) config.dump_suites = true;
    if (passed("--vocab-size")) {
        config.adapter.vocab_size = flags.vocab_size;
        config.overridden.push_back("adapter.vocab_size");
    }
    if (passed("--alpha")) {
        config.adapter.alpha = flags.alpha;
        config.overridden.push_back("adapter.alpha");
    }
    if (passed("--kappa")) {
        config.adapter.kappa = flags.kappa;
        config.overridden.push_back("adapter.kappa");
    }
    if (passed("--mu")) {
        config.adapter.mu = flags.mu;
        config.overridden.push_back("adapter.mu");
    }
    if (passed("--vocab")) config.adapter.vocab_path = flags.vocab_path;
    return config;
}

int execute(reprobe::ExperimentConfig config) {
    auto record = reprobe::run(config, &g_cancel);
    std::cout << "run complete: " << config.out_dir << "/run.json";
    for (const auto& name : record.outputs) {
        if (name != "run.json") std::cout << ", " << config.out_dir << "/" << name;
    }
    std::cout << "\n";
    return 0;
}

int run_plot(const std::vector<std::string>& inputs, const std::string& out_path,
             const std::string& title) {
    if (inputs.empty()) {
        throw reprobe::ConfigError("plot: no input curve CSVs");
    }
    std::vector<reprobe::Series> series;
    for (const auto& path : inputs) {
        const auto curve = reprobe::curve_from_csv(reprobe::read_file(path));
        reprobe::Series s;
        s.label = std::filesystem::path(path).stem().string();
        for (std::size_t i = 0; i < curve.n_values.size(); ++i) {
            s.x.push_back(static_cast<double>(curve.n_values[i]));
            s.y.push_back(curve.mean_tp[i]);
            s.band.push_back(curve.std_tp[i]);
        }
        series.push_back(std::move(s));
    }
    reprobe::ChartOptions opts;
    opts.title = title;
    opts.x_label = "n";
    opts.y_label = "probability";
    reprobe::atomic_write_file(out_path, reprobe::render_line_chart(series, opts));
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int run_validate(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(reprobe::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        std::cout << "config error: " << e.what() << "\n";
        return 2;
    }
    auto config = reprobe::config_from_json(j);
    auto diagnostics = reprobe::validate_config(config);
    for (const auto& d : diagnostics) {
        std::cout << "error: " << d << "\n";
    }
    for (const auto& field : config.overridden) {
        std::cout << "override: " << field << "\n";
    }
    if (diagnostics.empty()) {
        std::cout << "ok: " << reprobe::kind_name(config.kind) << " config valid\n";
        return 0;
    }
    return 2;
}

} // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, handle_sigint);

    CLI::App app{"token co-occurrence reinforcement probes"};
    app.require_subcommand(1);

    // probe repeat | pair | phrase
    auto* probe = app.add_subcommand("probe", "repeated/perturbed context probes");
    probe->require_subcommand(1);
    CommonFlags repeat_flags, pair_flags, phrase_flags;
    auto* repeat_cmd = probe->add_subcommand("repeat", "full-sentence repetition probe");
    add_common(repeat_cmd, repeat_flags);
    auto* pair_cmd = probe->add_subcommand("pair", "kept-token pair probe");
    add_common(pair_cmd, pair_flags);
    std::size_t distance = 0, kept_count = 2;
    pair_cmd->add_option("--distance", distance, "replaced tokens between the kept pair");
    pair_cmd->add_option("--kept-count", kept_count, "kept tokens (2 = controlled pair)");
    auto* phrase_cmd = probe->add_subcommand("phrase", "kept-suffix phrase probe");
    add_common(phrase_cmd, phrase_flags);
    std::size_t phrase_len = 2;
    phrase_cmd->add_option("--phrase-len", phrase_len, "kept suffix length");

    // corpus pn
    auto* corpus = app.add_subcommand("corpus", "corpus statistics");
    corpus->require_subcommand(1);
    CommonFlags corpus_flags;
    auto* pn_cmd = corpus->add_subcommand("pn", "recurrence probability by occurrence count");
    add_common(pn_cmd, corpus_flags);
    std::size_t window = 1024, max_n = 100;
    bool include_zero = false;
    pn_cmd->add_option("--window", window, "context window T");
    pn_cmd->add_option("--max-n", max_n, "largest reported occurrence count");
    pn_cmd->add_flag("--include-zero", include_zero, "report the n=0 bucket (window-local types)");

    // icl mask | nc | ra | cot
    auto* icl = app.add_subcommand("icl", "demonstration manipulations");
    icl->require_subcommand(1);
    CommonFlags mask_flags, nc_flags, ra_flags, cot_flags;
    auto* mask_cmd = icl->add_subcommand("mask", "mask MMLU parts, track label-space probability");
    add_common(mask_cmd, mask_flags);
    std::vector<std::string> mask_parts;
    std::string substitute = "none";
    std::size_t mask_demos = 5;
    mask_cmd->add_option("--parts", mask_parts, "parts to mask: question option_content");
    mask_cmd->add_option("--substitute", substitute,
                         "formatting substitution: none|option_names|answer_indicator|both");
    mask_cmd->add_option("--demos", mask_demos, "max demonstrations K");

    auto* nc_cmd = icl->add_subcommand("nc", "non-informative connection injection");
    add_common(nc_cmd, nc_flags);
    std::string nc_phrase, nc_target = "D";
    std::size_t nc_demos = 5;
    nc_cmd->add_option("--phrase", nc_phrase, "phrase to inject (default pool phrase)");
    nc_cmd->add_option("--target", nc_target, "target label A..D");
    nc_cmd->add_option("--demos", nc_demos, "max demonstrations K");

    auto* ra_cmd = icl->add_subcommand("ra", "reordered answers");
    add_common(ra_cmd, ra_flags);
    double ratio = 0.5;
    std::string ra_target = "D";
    std::size_t ra_demos = 5;
    ra_cmd->add_option("--ratio", ratio, "fraction of demos reordered to the target");
    ra_cmd->add_option("--target", ra_target, "target label A..D");
    ra_cmd->add_option("--demos", ra_demos, "max demonstrations K");

    auto* cot_cmd = icl->add_subcommand("cot", "GSM8K chain-of-thought pattern probe");
    add_common(cot_cmd, cot_flags);
    std::vector<std::string> cot_parts;
    std::string pattern;
    std::size_t cot_demos = 5;
    bool first_token = false;
    cot_cmd->add_option("--parts", cot_parts, "progressive masks: question question_tag newline");
    cot_cmd->add_option("--pattern", pattern, "pattern to score");
    cot_cmd->add_option("--demos", cot_demos, "max demonstrations K");
    cot_cmd->add_flag("--first-token", first_token, "score only the first pattern token");

    // ledger
    CommonFlags ledger_flags;
    auto* ledger_cmd = app.add_subcommand("ledger", "pairwise reinforcement tally");
    add_common(ledger_cmd, ledger_flags);

    // plot
    auto* plot_cmd = app.add_subcommand("plot", "overlay curve CSVs into one SVG");
    std::vector<std::string> plot_inputs;
    std::string plot_out = "chart.svg", plot_title;
    plot_cmd->add_option("inputs", plot_inputs, "curve CSV files")->required();
    plot_cmd->add_option("--out", plot_out, "output SVG path");
    plot_cmd->add_option("--title", plot_title, "chart title");

    // validate
    auto* validate_cmd = app.add_subcommand("validate", "check a config without executing");
    std::string validate_path;
    validate_cmd->add_option("config", validate_path, "config JSON path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (repeat_cmd->parsed()) {
            return execute(assemble(repeat_cmd, repeat_flags, reprobe::ExperimentKind::repeat));
        }
        if (pair_cmd->parsed()) {
            auto config = assemble(pair_cmd, pair_flags, reprobe::ExperimentKind::token_pair);
            if (pair_cmd->count("--distance")) {
                config.params.distance = distance;
                config.overridden.push_back("params.distance");
            }
            if (pair_cmd->count("--kept-count")) {
                config.params.kept_count = kept_count;
                config.overridden.push_back("params.kept_count");
            }
            return execute(std::move(config));
        }
        if (phrase_cmd->parsed()) {
            auto config = assemble(phrase_cmd, phrase_flags, reprobe::ExperimentKind::phrase);
            if (phrase_cmd->count("--phrase-len")) {
                config.params.phrase_len = phrase_len;
                config.overridden.push_back("params.phrase_len");
            }
            return execute(std::move(config));
        }
        if (pn_cmd->parsed()) {
            auto config = assemble(pn_cmd, corpus_flags, reprobe::ExperimentKind::corpus_pn);
            if (pn_cmd->count("--window")) {
                config.params.window = window;
                config.overridden.push_back("params.window");
            }
            if (pn_cmd->count("--max-n")) {
                config.params.max_n = max_n;
                config.overridden.push_back("params.max_n");
            }
            if (pn_cmd->count("--include-zero")) config.params.include_zero = true;
            return execute(std::move(config));
        }
        if (mask_cmd->parsed()) {
            auto config = assemble(mask_cmd, mask_flags, reprobe::ExperimentKind::mmlu_mask);
            if (mask_cmd->count("--parts")) config.params.parts = mask_parts;
            if (mask_cmd->count("--substitute")) config.params.substitute = substitute;
            if (mask_cmd->count("--demos")) config.params.demos = mask_demos;
            return execute(std::move(config));
        }
        if (nc_cmd->parsed()) {
            auto config = assemble(nc_cmd, nc_flags, reprobe::ExperimentKind::mmlu_nc);
            if (nc_cmd->count("--phrase")) config.params.phrase = nc_phrase;
            if (nc_cmd->count("--target")) config.params.target = reprobe::label_from_string(nc_target);
            if (nc_cmd->count("--demos")) config.params.demos = nc_demos;
            return execute(std::move(config));
        }
        if (ra_cmd->parsed()) {
            auto config = assemble(ra_cmd, ra_flags, reprobe::ExperimentKind::mmlu_ra);
            if (ra_cmd->count("--ratio")) {
                config.params.ratio = ratio;
                config.overridden.push_back("params.ratio");
            }
            if (ra_cmd->count("--target")) config.params.target = reprobe::label_from_string(ra_target);
            if (ra_cmd->count("--demos")) config.params.demos = ra_demos;
            return execute(std::move(config));
        }
        if (cot_cmd->parsed()) {
            auto config = assemble(cot_cmd, cot_flags, reprobe::ExperimentKind::gsm8k_cot);
            if (cot_cmd->count("--parts")) config.params.parts = cot_parts;
            if (cot_cmd->count("--pattern")) config.params.pattern = pattern;
            if (cot_cmd->count("--demos")) config.params.demos = cot_demos;
            if (cot_cmd->count("--first-token")) config.params.first_token = true;
            return execute(std::move(config));
        }
        if (ledger_cmd->parsed()) {
            return execute(assemble(ledger_cmd, ledger_flags, reprobe::ExperimentKind::ledger_tally));
        }
        if (plot_cmd->parsed()) {
            return run_plot(plot_inputs, plot_out, plot_title);
        }
        if (validate_cmd->parsed()) {
            return run_validate(validate_path);
        }
    } catch (const reprobe::Cancelled&) {
        std::cerr << "cancelled\n";
        return 130;
    } catch (const reprobe::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const reprobe::AdapterError& e) {
        std::cerr << "adapter error: " << e.what() << "\n";
        return 3;
    } catch (const reprobe::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
