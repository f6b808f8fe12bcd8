// arim: dataset generation, training, evaluation and plot export.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "arim/baseline.hpp"
#include "arim/dataset.hpp"
#include "arim/evaluation.hpp"
#include "arim/fcn/train.hpp"
#include "arim/parallel.hpp"
#include "arim/profile.hpp"
#include "json_config.hpp"

namespace fs = std::filesystem;
using namespace arim;

namespace {

struct Globals {
    std::size_t threads = 0;
    int verbosity = 0;
    bool quiet = false;
    bool desk_scale = false;

    std::size_t thread_count() const { return threads > 0 ? threads : default_thread_count(); }
};

struct GenerateArgs {
    std::uint64_t count = 0;
    std::uint64_t seed = 0;
    std::string out;
    bool full_corpus = false;
    std::size_t shard_size = 1000;
};

struct TrainArgs {
    std::string arch;
    std::string data;
    std::size_t epochs = 100;
    double lr = 1e-5;
    std::size_t batch = 10;
    double wd = 1e-5;
    std::uint64_t seed = 0;
    std::string out_model;
    std::string history;
};

struct EvaluateArgs {
    std::string method;
    std::string model;
    std::string data;
    std::string split = "test";
    std::string report;
    std::string csv;
    std::optional<double> k;
};

struct PlotArgs {
    std::string data;
    std::uint64_t sample_id = 0;
    std::string method = "zeroing";
    std::string model;
    std::optional<double> k;
    std::string format = "csv";
    std::string out;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

/// The scale profile of a corpus; --desk-scale must agree with it.
ScaleProfile corpus_profile(const DatasetReader& reader, const Globals& g) {
    const auto& name = reader.manifest().profile;
    if (g.desk_scale && name != "desk")
        throw CLI::ValidationError("--desk-scale", "dataset was generated with the " + name + " profile");
    auto profile = ScaleProfile::by_name(name);
    if (!(profile.radar == reader.manifest().radar_params))
        throw std::runtime_error("manifest radar parameters do not match the " + name + " profile");
    return profile;
}

void check_model_fits(const fcn::FcnModel& model, const DatasetReader& reader) {
    if (model.signal_len() != reader.manifest().radar_params.num_samples ||
        model.output_len() != reader.manifest().radar_params.profile_len())
        throw std::runtime_error("model expects " + std::to_string(model.signal_len()) +
                                 "-sample sweeps, dataset holds " +
                                 std::to_string(reader.manifest().radar_params.num_samples));
}

int run_generate(const GenerateArgs& a, const Globals& g) {
    if (a.full_corpus && g.desk_scale) throw CLI::ValidationError("--paper-scale cannot be combined with --desk-scale");
    std::uint64_t count = a.count;
    if (count == 0) {
        if (!a.full_corpus) throw CLI::RequiredError("--count (or --paper-scale)");
        count = 48000;
    }
    const auto profile = g.desk_scale ? ScaleProfile::desk() : ScaleProfile::full();
    GenerateOptions options;
    options.shard_size = a.shard_size;
    options.threads = g.thread_count();
    const auto manifest = generate(count, a.seed, a.out, profile, options);
    std::cout << "manifest: " << (fs::path(a.out) / kManifestName).string() << "\n";
    std::cout << "profile=" << manifest.profile << " samples=" << manifest.total_samples
              << " train=" << manifest.train_count << " test=" << manifest.test_count << "\n";
    for (const auto& s : manifest.shards) {
        char crc[16];
        std::snprintf(crc, sizeof crc, "%08x", s.crc32);
        std::cout << s.file << " samples=" << s.count << " crc32=" << crc << "\n";
    }
    return 0;
}

int run_train(const TrainArgs& a, const Globals& g) {
    const DatasetReader reader(a.data);
    const auto profile = corpus_profile(reader, g);
    fcn::TrainConfig config;
    config.epochs = a.epochs;
    config.batch_size = a.batch;
    config.learning_rate = a.lr;
    config.weight_decay = a.wd;
    config.rng_seed = a.seed;
    config.threads = g.thread_count();
    config.validate();

    std::cout << "train: arch=" << a.arch << " profile=" << profile.name << " epochs=" << config.epochs
              << " batch=" << config.batch_size << " lr=" << fmt("%g", config.learning_rate)
              << " wd=" << fmt("%g", config.weight_decay) << " seed=" << config.rng_seed
              << " threads=" << config.threads << std::endl;

    const auto train_set = reader.load(Split::train);
    const auto validation = reader.load(Split::validation);
    if (train_set.empty()) throw std::runtime_error("dataset has no training samples");
    std::cout << "samples: train=" << train_set.size() << " validation=" << validation.size() << std::endl;

    auto model = fcn::FcnModel::build(fcn::parse_arch(a.arch), profile, a.seed);
    const auto result = fcn::train(model, train_set, validation, config, [&](const fcn::EpochStats& e) {
        if (g.quiet) return;
        std::cerr << "epoch " << e.epoch << " train_loss=" << fmt("%.6g", e.train_loss)
                  << " val_loss=" << fmt("%.6g", e.val_loss) << std::endl;
    });
    fcn::save(model, a.out_model);
    if (!a.history.empty()) write_text(a.history, fcn::history_csv(result));
    std::cout << "model: " << a.out_model << " best_epoch=" << result.best_epoch
              << " final_train_loss=" << fmt("%.6g", result.history.back().train_loss) << "\n";
    return 0;
}

/// Zeroing factor: the given one, else the grid point tuned on validation.
double zeroing_factor(const DatasetReader& reader, std::optional<double> k, const Globals& g) {
    if (k) return *k;
    const auto validation = reader.load(Split::validation);
    if (validation.empty()) throw std::runtime_error("dataset has no validation samples to tune zeroing on");
    const double tuned = tune_threshold(validation, ZeroingConfig::default_grid(), {}, g.thread_count());
    if (!g.quiet) std::cerr << "zeroing: tuned k=" << tuned << " on validation\n";
    return tuned;
}

struct ResolvedMethod {
    Method method;
    std::optional<fcn::FcnModel> model;  // keeps the fcn model alive
    std::optional<double> k;
};

std::unique_ptr<ResolvedMethod> resolve_method(const std::string& name, const std::string& model_path,
                                               std::optional<double> k, const DatasetReader& reader,
                                               const Globals& g) {
    auto r = std::make_unique<ResolvedMethod>();
    if (name == "identity") {
        r->method = identity_method();
    } else if (name == "oracle") {
        r->method = oracle_method();
    } else if (name == "zeroing") {
        r->k = zeroing_factor(reader, k, g);
        r->method = zeroing_method(*r->k);
    } else if (name == "fcn") {
        if (model_path.empty()) throw CLI::RequiredError("--model (needed by --method fcn)");
        r->model = fcn::load(model_path);
        check_model_fits(*r->model, reader);
        r->method = fcn::fcn_method(*r->model);
    } else {
        throw CLI::ValidationError("--method", "unknown method " + name);
    }
    return r;
}

int run_evaluate(const EvaluateArgs& a, const Globals& g) {
    if (a.method == "fcn" && a.model.empty()) throw CLI::RequiredError("--model (needed by --method fcn)");
    const DatasetReader reader(a.data);
    corpus_profile(reader, g);
    const Split split = parse_split(a.split);
    const auto resolved = resolve_method(a.method, a.model, a.k, reader, g);
    const auto records = reader.load(split);
    if (records.empty()) throw std::runtime_error("split " + a.split + " is empty");
    const auto report = evaluate(resolved->method, records, {}, a.method, a.split, g.thread_count());

    std::cout << "method=" << report.method << " split=" << report.split << " samples=" << report.samples.size()
              << " mean_auc=" << fmt("%.6f", report.mean_auc) << " mae_db=" << fmt("%.6f", report.mae_db)
              << " mean_delta_snr_db=" << fmt("%.6f", report.mean_delta_snr_db);
    if (resolved->k) std::cout << " k=" << *resolved->k;
    std::cout << "\n";

    if (!a.report.empty()) {
        nlohmann::json j = report;
        if (resolved->k) j["zeroing_k"] = *resolved->k;
        if (!a.model.empty()) j["model"] = a.model;
        j["data"] = a.data;
        write_text(a.report, j.dump(2) + "\n");
    }
    if (!a.csv.empty()) write_text(a.csv, per_sample_csv(report));
    return 0;
}

std::string svg_plot(const std::vector<double>& range_m, const std::vector<std::vector<double>>& series,
                     const std::vector<std::string>& names, std::uint64_t sample_id) {
    const double w = 960, h = 420, left = 60, right = 150, top = 30, bottom = 45;
    double hi = -1e300;
    for (const auto& s : series)
        for (double v : s) hi = std::max(hi, v);
    const double y_max = std::ceil(hi / 10.0) * 10.0 + 5.0;
    const double y_min = y_max - 100.0;
    const double x_max = range_m.back();
    auto px = [&](double x) { return left + (w - left - right) * x / x_max; };
    auto py = [&](double y) {
        y = std::clamp(y, y_min, y_max);
        return top + (h - top - bottom) * (y_max - y) / (y_max - y_min);
    };
    const char* colors[] = {"#1b7837", "#b2182b", "#2166ac"};
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << left << "\" y=\"18\">sample " << sample_id << ": range profile (dB)</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << (w - left - right) << "\" height=\""
      << (h - top - bottom) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int t = 0; t <= 5; ++t) {
        const double x = x_max * t / 5.0;
        o << "<text x=\"" << px(x) << "\" y=\"" << (h - bottom + 16) << "\" text-anchor=\"middle\">" << fmt("%.0f", x)
          << "</text>\n";
        const double y = y_min + (y_max - y_min) * t / 5.0;
        o << "<text x=\"" << (left - 6) << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << fmt("%.0f", y)
          << "</text>\n";
    }
    o << "<text x=\"" << (left + (w - left - right) / 2) << "\" y=\"" << (h - 8) << "\" text-anchor=\"middle\">range (m)</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        o << "<polyline fill=\"none\" stroke-width=\"1\" stroke=\"" << colors[s % 3] << "\" points=\"";
        for (std::size_t i = 0; i < range_m.size(); ++i) o << fmt("%.2f", px(range_m[i])) << ',' << fmt("%.2f", py(series[s][i])) << ' ';
        o << "\"/>\n";
        o << "<text x=\"" << (w - right + 10) << "\" y=\"" << (top + 16 + 18 * s) << "\" fill=\"" << colors[s % 3] << "\">"
          << names[s] << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

int run_plot(const PlotArgs& a, const Globals& g) {
    if (a.method == "fcn" && a.model.empty()) throw CLI::RequiredError("--model (needed by --method fcn)");
    const DatasetReader reader(a.data);
    corpus_profile(reader, g);
    const SampleRecord record = reader.record(a.sample_id);
    const auto resolved = resolve_method(a.method, a.model, a.k, reader, g);
    const auto clean = clean_profile_db(record);
    const auto interfered = interfered_profile_db(record);
    const auto mitigated = resolved->method(record);
    const auto& radar = reader.manifest().radar_params;
    std::vector<double> range_m(clean.size());
    for (std::size_t i = 0; i < range_m.size(); ++i) range_m[i] = radar.bin_to_range(static_cast<double>(i));

    std::string text;
    if (a.format == "csv") {
        text = "bin,range_m,clean_db,interfered_db,mitigated_db\n";
        char line[160];
        for (std::size_t i = 0; i < clean.size(); ++i) {
            std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g,%.9g\n", i, range_m[i], clean[i], interfered[i],
                          mitigated[i]);
            text += line;
        }
    } else {
        text = svg_plot(range_m, {clean, interfered, mitigated}, {"clean", "interfered", a.method}, a.sample_id);
    }
    write_text(a.out, text);
    std::cout << "plot: " << a.out << " sample=" << a.sample_id << " method=" << a.method << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FMCW radar interference mitigation toolkit"};
    app.name("arim");
    app.config_formatter(std::make_shared<cli::JsonConfig>());
    app.set_config("--config", "", "JSON file with option values ({\"train\": {\"epochs\": 5}})");
    app.require_subcommand(1);

    Globals g;
    bool dump_config = false;
    app.add_option("--threads", g.threads, "Worker threads (default: ARIM_THREADS or 1)");
    app.add_flag("-v,--verbose", g.verbosity, "More log output");
    app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");
    app.add_flag("--desk-scale", g.desk_scale, "Use the reduced 256-sample configuration");
    app.add_flag("--dump-config", dump_config, "Print the effective options as JSON and exit")->configurable(false);

    GenerateArgs gen;
    auto* generate_cmd = app.add_subcommand("generate", "Simulate a dataset");
    generate_cmd->add_option("--count", gen.count, "Number of samples");
    generate_cmd->add_option("--seed", gen.seed, "Global seed")->capture_default_str();
    generate_cmd->add_option("--out", gen.out, "Output directory")->required();
    generate_cmd->add_flag("--paper-scale", gen.full_corpus, "Full 48,000-sample corpus");
    generate_cmd->add_option("--shard-size", gen.shard_size, "Samples per shard file")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train an FCN on a dataset");
    train_cmd->add_option("--arch", tr.arch, "Network architecture")
        ->required()
        ->check(CLI::IsMember({"shallow", "deep"}));
    train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
    train_cmd->add_option("--epochs", tr.epochs)->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", tr.lr, "Learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--batch", tr.batch, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--wd", tr.wd, "Weight decay")->capture_default_str()->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--seed", tr.seed, "Initialization and shuffling seed")->capture_default_str();
    train_cmd->add_option("--out-model", tr.out_model, "Model file to write")->required();
    train_cmd->add_option("--history", tr.history, "CSV file for the per-epoch losses");

    EvaluateArgs ev;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a mitigation method on a split");
    evaluate_cmd->add_option("--method", ev.method)->required()->check(
        CLI::IsMember({"identity", "zeroing", "oracle", "fcn"}));
    evaluate_cmd->add_option("--model", ev.model, "Model file (method fcn)");
    evaluate_cmd->add_option("--data", ev.data, "Dataset directory")->required();
    evaluate_cmd->add_option("--split", ev.split)->capture_default_str()->check(
        CLI::IsMember({"train", "validation", "test"}));
    evaluate_cmd->add_option("--report", ev.report, "JSON report path");
    evaluate_cmd->add_option("--csv", ev.csv, "Per-sample CSV path");
    evaluate_cmd->add_option("--k", ev.k, "Zeroing factor (default: tuned on validation)")
        ->check(CLI::PositiveNumber);

    PlotArgs pl;
    auto* plot_cmd = app.add_subcommand("plot", "Export one sample's range profiles");
    plot_cmd->add_option("--data", pl.data, "Dataset directory")->required();
    plot_cmd->add_option("--sample-id", pl.sample_id)->required();
    plot_cmd->add_option("--method", pl.method)->capture_default_str()->check(
        CLI::IsMember({"identity", "zeroing", "oracle", "fcn"}));
    plot_cmd->add_option("--model", pl.model, "Model file (method fcn)");
    plot_cmd->add_option("--k", pl.k, "Zeroing factor (default: tuned on validation)")->check(CLI::PositiveNumber);
    plot_cmd->add_option("--format", pl.format)->capture_default_str()->check(CLI::IsMember({"csv", "svg"}));
    plot_cmd->add_option("--out", pl.out, "Output file")->required();

    for (auto* sub : {generate_cmd, train_cmd, evaluate_cmd, plot_cmd}) sub->configurable();

    try {
        app.parse(argc, argv);
        if (dump_config) {
            std::cout << app.config_to_str(false, false);
            return 0;
        }
        if (*generate_cmd) return run_generate(gen, g);
        if (*train_cmd) return run_train(tr, g);
        if (*evaluate_cmd) return run_evaluate(ev, g);
        if (*plot_cmd) return run_plot(pl, g);
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
