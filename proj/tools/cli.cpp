#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mxfar/error.hpp"
#include "mxfar/export.hpp"
#include "mxfar/panel_io.hpp"
#include "mxfar/parallel.hpp"

namespace mxfar::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::shared_ptr<spdlog::logger> logger() {
    if (auto existing = spdlog::get("mxfar")) return existing;
    auto log = spdlog::stderr_color_mt("mxfar");
    log->set_pattern("[%l] %v");
    const char* env = std::getenv("MXFAR_LOG");
    auto level = env ? spdlog::level::from_str(env) : spdlog::level::warn;
    // from_str maps unknown names to off; keep warnings visible instead.
    if (env && level == spdlog::level::off && std::string(env) != "off") level = spdlog::level::warn;
    log->set_level(level);
    return log;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorCode::IoError, "SHA-256 computation failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string absolute(const std::string& path) { return fs::absolute(path).lexically_normal().string(); }

// Canonical string forms of bound option values, used for manifests and reruns.
std::vector<std::string> to_strings(int v) { return {std::to_string(v)}; }
std::vector<std::string> to_strings(std::uint64_t v) { return {std::to_string(v)}; }
std::vector<std::string> to_strings(double v) { return {format_number(v)}; }
std::vector<std::string> to_strings(const std::string& v) { return {v}; }
template <class T>
std::vector<std::string> to_strings(const std::vector<T>& v) {
    std::vector<std::string> out;
    for (const auto& x : v) out.push_back(to_strings(x).front());
    return out;
}
template <class T>
std::vector<std::string> to_strings(const std::optional<T>& v) {
    return v ? to_strings(*v) : std::vector<std::string>{};
}

struct ModelFlags {
    int p = 1;
    double bandwidth = 1.0;
    std::string kernel = "epanechnikov";
    int grid_size = 50;
    double lambda = 1.0;
    int ref_channel = 1;
    int ref_lag = 1;
};

struct Options {
    std::string input;
    std::string output_dir;
    std::string manifest;
    int threads = 0;
    ModelFlags model;
    // select
    std::vector<int> p_list{1};
    std::vector<double> h_list{1.0};
    std::vector<int> ref_channels{1};
    std::vector<int> ref_lags{1};
    int subseries = 4;
    int horizon = 0;
    // bootstrap-based commands
    int boot_reps = 200;
    double alpha = 0.05;
    int omega_points = 64;
    int window_len = 640;
    std::uint64_t seed = 0;
    // simulate
    std::string kind = "expar";
    std::string spec_path;
    std::optional<std::uint64_t> sim_seed;
    std::vector<int> group_sizes;
    std::optional<int> n_time;
    std::optional<int> burn_in;
    std::optional<int> max_redraws;
    std::optional<double> noise_sd;
    std::optional<double> effect_sd;
    std::optional<int> sim_ref_channel;
    std::optional<int> sim_ref_lag;
};

struct Flag {
    std::string name;
    bool multi = false;
    std::function<std::vector<std::string>()> values;
};

/// One subcommand and the flags that make up its resolved configuration.
struct Command {
    CLI::App* app = nullptr;
    std::vector<Flag> flags;

    template <class T>
    CLI::Option* value(const std::string& name, T& var, const std::string& help) {
        flags.push_back({name, false, [&var] { return to_strings(var); }});
        return app->add_option(name, var, help)->capture_default_str();
    }
    template <class T>
    CLI::Option* list(const std::string& name, std::vector<T>& var, const std::string& help) {
        flags.push_back({name, true, [&var] { return to_strings(var); }});
        return app->add_option(name, var, help)->capture_default_str()->expected(1, -1);
    }
    CLI::Option* path(const std::string& name, std::string& var, const std::string& help) {
        flags.push_back({name, false, [&var] {
                             return var.empty() ? std::vector<std::string>{} : std::vector<std::string>{absolute(var)};
                         }});
        return app->add_option(name, var, help);
    }
};

class OutputDir {
public:
    explicit OutputDir(std::string dir) : dir_(std::move(dir)) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw Error(ErrorCode::IoError, "cannot create output directory " + dir_ + ": " + ec.message());
    }

    void write(const std::string& name, const std::string& content, bool record = true) {
        const auto path = fs::path(dir_) / name;
        std::ofstream out(path, std::ios::binary);
        out << content;
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
        if (record) files_.push_back({{"file", name}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
        logger()->info("wrote {}", path.string());
    }
    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
    template <class F>
    void write_with(const std::string& name, F&& writer) {
        std::ostringstream os;
        writer(os);
        write(name, os.str());
    }

    [[nodiscard]] const json& files() const noexcept { return files_; }
    [[nodiscard]] const std::string& path() const noexcept { return dir_; }

private:
    std::string dir_;
    json files_ = json::array();
};

struct Run {
    const Options& o;
    std::ostream& out;
    json inputs = json::array();
    json seed = nullptr;

    Panel load_panel() {
        const std::string bytes = read_file(o.input);
        inputs.push_back({{"path", absolute(o.input)}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
        std::istringstream in(bytes);
        auto report = validate_panel(in, o.input);
        if (!report.ok()) {
            throw Error(ErrorCode::IngestionError, std::to_string(report.violations.size()) + " violation(s) in " +
                                                       o.input + "\n" + report.format());
        }
        const Panel& p = *report.panel;
        logger()->info("loaded {}: N={} k={} T={} G={}", o.input, p.n_subjects(), p.n_channels(), p.n_time(),
                       p.n_groups());
        return std::move(*report.panel);
    }

    [[nodiscard]] ModelConfig config() const {
        ModelConfig c;
        c.p = o.model.p;
        c.bandwidth = o.model.bandwidth;
        c.kernel = parse_kernel(o.model.kernel);
        c.grid_size = o.model.grid_size;
        c.penalty_scale = o.model.lambda;
        if (o.model.ref_channel < 1) throw Error(ErrorCode::InvalidArgument, "--ref-channel is 1-based");
        c.reference = ReferenceSpec::from_channel(o.model.ref_channel - 1, o.model.ref_lag);
        return c;
    }

    [[nodiscard]] ModelConfig config(const Panel& panel) const {
        auto c = config();
        c.validate(panel);
        return c;
    }

    [[nodiscard]] BootstrapOptions bootstrap() {
        if (o.boot_reps < 1) throw Error(ErrorCode::InvalidArgument, "--boot-reps must be positive");
        BootstrapOptions b;
        b.replicates = o.boot_reps;
        b.seed = o.seed;
        b.threads = o.threads;
        seed = o.seed;
        return b;
    }

    [[nodiscard]] SignificanceOptions significance() {
        if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "--alpha must be in (0, 1)");
        if (o.omega_points < 1) throw Error(ErrorCode::InvalidArgument, "--omega-points must be positive");
        SignificanceOptions s;
        s.bootstrap = bootstrap();
        s.alpha_level = o.alpha;
        s.omega = default_omega_grid(o.omega_points);
        return s;
    }
};

void warn_all(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) logger()->warn("{}", w);
}

int cmd_simulate(Run& r, OutputDir& dir) {
    const Options& o = r.o;
    GeneratorSpec spec;
    if (!o.spec_path.empty()) {
        const std::string bytes = read_file(o.spec_path);
        r.inputs.push_back(
            {{"path", absolute(o.spec_path)}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
        json j;
        try {
            j = json::parse(bytes);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::SpecError, o.spec_path + ": " + e.what());
        }
        spec = generator_spec_from_json(j.contains("spec") ? j.at("spec") : j);
    } else {
        spec = GeneratorSpec::defaults(parse_generator(o.kind));
    }
    if (!o.group_sizes.empty()) spec.group_sizes = o.group_sizes;
    if (o.n_time) spec.n_time = *o.n_time;
    if (o.burn_in) spec.burn_in = *o.burn_in;
    if (o.max_redraws) spec.max_redraws = *o.max_redraws;
    if (o.noise_sd) spec.noise_sd = *o.noise_sd;
    if (o.effect_sd) spec.random_effect_sd = *o.effect_sd;
    if (o.sim_seed) spec.seed = *o.sim_seed;
    spec.validate();
    r.seed = spec.seed;

    const auto sim = simulate(spec);
    ModelConfig analysis;
    analysis.p = o.model.p;
    analysis.grid_size = o.model.grid_size;
    const int ref_channel = o.sim_ref_channel ? *o.sim_ref_channel - 1 : spec.ref_channel;
    const int ref_lag = o.sim_ref_lag ? *o.sim_ref_lag : spec.ref_lag;
    analysis.reference = ReferenceSpec::from_channel(ref_channel, ref_lag);
    analysis.validate(sim.panel);
    const auto grid = build_grid(sim.panel, analysis);

    dir.write_with("panel.csv", [&](std::ostream& os) { write_panel_csv(sim.panel, os); });
    json sidecar = simulation_json(sim, grid);
    sidecar["analysis"] = config_json(analysis);
    dir.write_json("simulation.json", sidecar);
    r.out << "simulated " << generator_name(spec.kind) << ": N=" << sim.panel.n_subjects()
          << " k=" << sim.panel.n_channels() << " T=" << sim.panel.n_time() << " G=" << sim.panel.n_groups()
          << '\n';
    return Ok;
}

int cmd_validate(Run& r, OutputDir* dir) {
    const std::string bytes = read_file(r.o.input);
    r.inputs.push_back({{"path", absolute(r.o.input)}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
    std::istringstream in(bytes);
    const auto report = validate_panel(in, r.o.input);
    std::ostringstream text;
    if (report.ok()) {
        const Panel& p = *report.panel;
        text << "ok: N=" << p.n_subjects() << " k=" << p.n_channels() << " T=" << p.n_time()
             << " G=" << p.n_groups() << '\n';
    } else {
        text << report.violations.size() << " violation(s)\n" << report.format(report.violations.size());
    }
    r.out << text.str();
    if (dir) dir->write("validation.txt", text.str());
    return report.ok() ? Ok : Input;
}

int cmd_fit(Run& r, OutputDir& dir) {
    const auto panel = r.load_panel();
    const auto cfg = r.config(panel);
    const auto grid = fit_mxfar(panel, cfg);
    dir.write_with("coefficients.csv", [&](std::ostream& os) { write_coefficients_csv(grid, os); });
    dir.write_with("random_effects.csv", [&](std::ostream& os) { write_random_effects_csv(grid, os); });
    dir.write_json("fit.json", fit_summary_json(grid));
    if (grid.n_gaps() > 0) logger()->warn("{} of {} grid points are gaps", grid.n_gaps(), grid.size());
    r.out << "fit: M=" << grid.size() << " gaps=" << grid.n_gaps()
          << " pooled_sigma2_eps=" << format_number(grid.pooled_sigma2_eps()) << '\n';
    return Ok;
}

int cmd_select(Run& r, OutputDir& dir) {
    const Options& o = r.o;
    const auto panel = r.load_panel();
    auto base = r.config();
    std::vector<ReferenceSpec> refs;
    for (int c : o.ref_channels) {
        if (c < 1) throw Error(ErrorCode::InvalidArgument, "--ref-channel is 1-based");
        for (int l : o.ref_lags) refs.push_back(ReferenceSpec::from_channel(c - 1, l));
    }
    SelectionOptions opt;
    opt.r = o.horizon;
    opt.Q = o.subseries;
    opt.threads = o.threads;
    const auto report = select_model(panel, base, o.h_list, o.p_list, refs, opt);
    dir.write_with("ape.csv", [&](std::ostream& os) { write_ape_csv(report, os); });
    const auto& best = report.candidates[report.best];
    json failures = json::array();
    for (std::size_t i = 0; i < report.results.size(); ++i) {
        if (report.results[i].failed) failures.push_back({{"candidate", i}, {"reason", report.results[i].failure}});
    }
    dir.write_json("select.json", {{"r", report.r},
                                   {"Q", report.Q},
                                   {"best", {{"bandwidth", best.bandwidth},
                                             {"p", best.p},
                                             {"ref_channel", best.reference.channel + 1},
                                             {"ref_lag", best.reference.lag},
                                             {"ape", report.results[report.best].ape}}},
                                   {"failed", std::move(failures)}});
    r.out << "best: h=" << format_number(best.bandwidth) << " p=" << best.p
          << " ref_channel=" << best.reference.channel + 1 << " ref_lag=" << best.reference.lag
          << " ape=" << format_number(report.results[report.best].ape) << '\n';
    return Ok;
}

int cmd_test(Run& r, OutputDir& dir) {
    const auto panel = r.load_panel();
    const auto cfg = r.config(panel);
    TestOptions opt;
    opt.bootstrap = r.bootstrap();
    opt.null_fit.lambda = cfg.penalty_scale;
    const auto res = nonlinearity_test(panel, cfg, opt);
    warn_all(res.warnings);
    dir.write_with("lboot.csv", [&](std::ostream& os) { write_lboot_csv(res, os); });
    dir.write_json("test.json", test_summary_json(res));
    r.out << "L=" << format_number(res.L) << " B=" << res.B << " p_value=" << format_number(res.p_value) << '\n';
    return Ok;
}

int cmd_bands(Run& r, OutputDir& dir) {
    const auto panel = r.load_panel();
    const auto cfg = r.config(panel);
    const auto opt = r.bootstrap();
    if (!(r.o.alpha > 0.0 && r.o.alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "--alpha must be in (0, 1)");
    const auto band = coefficient_bands(panel, cfg, 1.0 - r.o.alpha, opt);
    warn_all(band.warnings);
    dir.write_with("bands.csv", [&](std::ostream& os) { write_bands_csv(band, os); });
    dir.write_json("bands.json", {{"level", band.level},
                                  {"B", band.B},
                                  {"requested", band.requested},
                                  {"warnings", band.warnings}});
    r.out << "bands: level=" << format_number(band.level) << " B=" << band.B << '\n';
    return Ok;
}

int cmd_fpdc(Run& r, OutputDir& dir) {
    const auto panel = r.load_panel();
    const auto cfg = r.config(panel);
    const auto opt = r.significance();
    const auto sig = edge_significance(panel, cfg, opt);
    warn_all(sig.warnings);
    const auto grid = fit_mxfar(panel, cfg);
    std::vector<FpdcSurface> surfaces;
    for (int g = 0; g < grid.n_groups; ++g) surfaces.push_back(mean_fpdc(grid, g, opt.omega));
    dir.write_with("fpdc.csv", [&](std::ostream& os) { write_fpdc_csv(sig, os); });
    dir.write_with("fpdc_surface.csv",
                   [&](std::ostream& os) { write_fpdc_surface_csv(surfaces, grid.n_channels, os); });
    dir.write_json("fpdc.json", significance_json(sig));
    int significant = 0;
    for (const auto& per_group : sig.significant) {
        for (const auto& m : per_group) {
            for (int j = 0; j < m.rows(); ++j) {
                for (int g = 0; g < m.cols(); ++g) significant += j != g && m(j, g);
            }
        }
    }
    r.out << "fpdc: B=" << sig.B << " significant cross edges=" << significant << '\n';
    return Ok;
}

int cmd_network(Run& r, OutputDir& dir) {
    const auto panel = r.load_panel();
    const auto cfg = r.config(panel);
    const auto opt = r.significance();
    const auto windows = windowed_significance(panel, cfg, r.o.window_len, opt);
    json per_window = json::array();
    for (const auto& w : windows) {
        warn_all(w.warnings);
        per_window.push_back({{"B", w.B}, {"B_null", w.B_null}, {"warnings", w.warnings}});
    }
    const auto summary = network_summary(windows);
    dir.write_with("network.csv", [&](std::ostream& os) { write_network_csv(summary, os); });
    dir.write("network.dot", network_dot(summary));
    dir.write_json("network.json", {{"windows", summary.windows},
                                    {"window_len", r.o.window_len},
                                    {"per_window", std::move(per_window)}});
    r.out << "network: windows=" << summary.windows << " edges=" << summary.edges.size() << '\n';
    return Ok;
}

int exit_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::IngestionError:
        case ErrorCode::IoError: return Input;
        case ErrorCode::InvalidArgument:
        case ErrorCode::InvalidBandwidth:
        case ErrorCode::SpecError:
        case ErrorCode::DegenerateReference:
        case ErrorCode::IndexError: return Configuration;
        case ErrorCode::EmptyDesign:
        case ErrorCode::InsufficientData:
        case ErrorCode::SingularDesign:
        case ErrorCode::SingularSystem:
        case ErrorCode::EmptyNeighborhood:
        case ErrorCode::VarianceUndefined:
        case ErrorCode::FitFailure:
        case ErrorCode::GapError:
        case ErrorCode::SubseriesError:
        case ErrorCode::SelectionError: return Estimation;
        case ErrorCode::TestError: return Inference;
        case ErrorCode::GenerationError:
        case ErrorCode::StabilityError:
        case ErrorCode::ExtrapolationError: return Simulation;
    }
    return Internal;
}

void add_model_flags(Command& c, Options& o) {
    c.value("--p", o.model.p, "Lag order");
    c.value("--bandwidth", o.model.bandwidth, "Kernel bandwidth h in reference units");
    c.value("--kernel", o.model.kernel, "Kernel")->check(CLI::IsMember({"epanechnikov", "gaussian"}));
    c.value("--grid-size", o.model.grid_size, "Number of grid points M");
    c.value("--lambda", o.model.lambda, "Penalty scale");
    c.value("--ref-channel", o.model.ref_channel, "Reference channel (1-based)");
    c.value("--ref-lag", o.model.ref_lag, "Reference lag d");
}

void add_io_flags(Command& c, Options& o, bool output_required = true) {
    c.path("--input", o.input, "Panel CSV")->required()->check(CLI::ExistingFile);
    auto* out = c.app->add_option("--output-dir", o.output_dir, "Directory for outputs and manifest.json");
    if (output_required) out->required();
}

void add_threads(Command& c, Options& o) {
    c.app->add_option("--threads", o.threads, "Worker threads (0 = all cores)")->capture_default_str();
}

void add_bootstrap_flags(Command& c, Options& o) {
    c.value("--boot-reps", o.boot_reps, "Bootstrap replicates B");
    c.value("--seed", o.seed, "Root seed of all random streams");
}

void add_significance_flags(Command& c, Options& o) {
    add_bootstrap_flags(c, o);
    c.value("--alpha", o.alpha, "Significance level");
    c.value("--omega-points", o.omega_points, "Number of frequencies in (0, 0.5)");
}

json resolved_arguments(const Command& c, json* config) {
    json args = json::array();
    for (const auto& f : c.flags) {
        const auto values = f.values();
        if (values.empty()) continue;
        args.push_back(f.name);
        for (const auto& v : values) args.push_back(v);
        const std::string key = f.name.substr(2);
        (*config)[key] = f.multi ? json(values) : json(values.front());
    }
    return args;
}

int rerun(const Options& o, std::ostream& out, std::ostream& err) {
    json manifest;
    try {
        manifest = json::parse(read_file(o.manifest));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::IngestionError, o.manifest + ": " + e.what());
    }
    try {
        for (const auto& in : manifest.at("inputs")) {
            const auto path = in.at("path").get<std::string>();
            if (sha256_hex(read_file(path)) != in.at("sha256").get<std::string>()) {
                throw Error(ErrorCode::IngestionError, "input " + path + " changed since the manifest was written");
            }
        }
        std::vector<std::string> args{manifest.at("command").get<std::string>()};
        for (const auto& a : manifest.at("arguments")) args.push_back(a.get<std::string>());
        args.push_back("--output-dir");
        args.push_back(o.output_dir);
        if (o.threads != 0) {
            args.push_back("--threads");
            args.push_back(std::to_string(o.threads));
        }
        const int status = run(args, out, err);
        if (status != Ok) return status;

        const auto fresh = json::parse(read_file((fs::path(o.output_dir) / "manifest.json").string()));
        const auto& expected = manifest.at("outputs");
        const auto& produced = fresh.at("outputs");
        bool same = expected.size() == produced.size();
        for (std::size_t i = 0; same && i < expected.size(); ++i) {
            same = expected[i].at("file") == produced[i].at("file") &&
                   expected[i].at("sha256") == produced[i].at("sha256");
        }
        if (!same) {
            err << "mxfar: rerun outputs differ from " << o.manifest << '\n';
            return Mismatch;
        }
        out << "reproduced " << produced.size() << " output(s)\n";
        return Ok;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IngestionError, o.manifest + ": malformed manifest: " + e.what());
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Mixed-effects functional-coefficient autoregression for multichannel panels", "mxfar"};
    app.require_subcommand(1);
    app.set_version_flag("--version", MXFAR_VERSION);
    std::map<std::string, Command> commands;
    auto make = [&](const std::string& name, const std::string& help) -> Command& {
        Command& c = commands[name];
        c.app = app.add_subcommand(name, help);
        return c;
    };

    {
        Command& c = make("simulate", "Generate a synthetic panel and its ground-truth sidecar");
        c.app->add_option("--output-dir", o.output_dir, "Directory for outputs")->required();
        c.value("--kind", o.kind, "Generator")
            ->check(CLI::IsMember({"expar", "sigmoid", "linear-var", "tar", "custom"}));
        c.path("--spec", o.spec_path, "Generator spec JSON (a simulation.json sidecar also works)")
            ->check(CLI::ExistingFile);
        c.value("--seed", o.sim_seed, "Root seed");
        c.list("--group-sizes", o.group_sizes, "Subjects per group");
        c.value("--time", o.n_time, "Retained length T");
        c.value("--burn-in", o.burn_in, "Discarded initial samples");
        c.value("--noise-sd", o.noise_sd, "Innovation standard deviation");
        c.value("--effect-sd", o.effect_sd, "Random-effect standard deviation");
        c.value("--max-redraws", o.max_redraws, "Stability redraws per subject");
        c.value("--p", o.model.p, "Lag order of the analysis grid");
        c.value("--grid-size", o.model.grid_size, "Points of the analysis grid");
        c.value("--ref-channel", o.sim_ref_channel, "Reference channel of the analysis grid (1-based)");
        c.value("--ref-lag", o.sim_ref_lag, "Reference lag of the analysis grid");
        add_threads(c, o);
    }
    {
        Command& c = make("validate", "Check a panel CSV and report every violation");
        add_io_flags(c, o, false);
        add_threads(c, o);
    }
    {
        Command& c = make("fit", "Fit the mixed-effects model on the reference grid");
        add_io_flags(c, o);
        add_model_flags(c, o);
        add_threads(c, o);
    }
    {
        Command& c = make("select", "Choose bandwidth, order and reference by accumulated prediction error");
        add_io_flags(c, o);
        c.list("--p", o.p_list, "Candidate lag orders");
        c.list("--bandwidth", o.h_list, "Candidate bandwidths");
        c.list("--ref-channel", o.ref_channels, "Candidate reference channels (1-based)");
        c.list("--ref-lag", o.ref_lags, "Candidate reference lags");
        c.value("--kernel", o.model.kernel, "Kernel")->check(CLI::IsMember({"epanechnikov", "gaussian"}));
        c.value("--grid-size", o.model.grid_size, "Number of grid points M");
        c.value("--lambda", o.model.lambda, "Penalty scale");
        c.value("--subseries", o.subseries, "Number of forecast subseries Q");
        c.value("--horizon", o.horizon, "Forecast block length r (0 = floor(0.1 T))");
        add_threads(c, o);
    }
    {
        Command& c = make("test", "Bootstrap test of constant against functional coefficients");
        add_io_flags(c, o);
        add_model_flags(c, o);
        add_bootstrap_flags(c, o);
        add_threads(c, o);
    }
    {
        Command& c = make("bands", "Pointwise bootstrap bands for the group-mean coefficients");
        add_io_flags(c, o);
        add_model_flags(c, o);
        add_bootstrap_flags(c, o);
        c.value("--alpha", o.alpha, "Bands have level 1 - alpha");
        add_threads(c, o);
    }
    {
        Command& c = make("fpdc", "Functional partial directed coherence with edge significance");
        add_io_flags(c, o);
        add_model_flags(c, o);
        add_significance_flags(c, o);
        add_threads(c, o);
    }
    {
        Command& c = make("network", "Edge significance proportions over non-overlapping windows");
        add_io_flags(c, o);
        add_model_flags(c, o);
        add_significance_flags(c, o);
        c.value("--window-len", o.window_len, "Samples per window");
        add_threads(c, o);
    }
    {
        Command& c = make("rerun", "Re-execute the command recorded in a manifest and compare outputs");
        c.app->add_option("--manifest", o.manifest, "manifest.json of an earlier run")
            ->required()
            ->check(CLI::ExistingFile);
        c.app->add_option("--output-dir", o.output_dir, "Directory for the new outputs")->required();
        add_threads(c, o);
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? Ok : Usage;
    }

    const auto chosen = app.get_subcommands().front()->get_name();
    const auto start = std::chrono::steady_clock::now();
    try {
        if (chosen == "rerun") return rerun(o, out, err);

        Run r{o, out};
        std::optional<OutputDir> dir;
        if (!o.output_dir.empty()) dir.emplace(o.output_dir);
        logger()->info("{} with {} thread(s)", chosen, resolve_threads(o.threads));

        int status = Ok;
        if (chosen == "simulate") status = cmd_simulate(r, *dir);
        else if (chosen == "validate") status = cmd_validate(r, dir ? &*dir : nullptr);
        else if (chosen == "fit") status = cmd_fit(r, *dir);
        else if (chosen == "select") status = cmd_select(r, *dir);
        else if (chosen == "test") status = cmd_test(r, *dir);
        else if (chosen == "bands") status = cmd_bands(r, *dir);
        else if (chosen == "fpdc") status = cmd_fpdc(r, *dir);
        else if (chosen == "network") status = cmd_network(r, *dir);

        if (dir) {
            json config = json::object();
            const json arguments = resolved_arguments(commands.at(chosen), &config);
            const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            json manifest = {{"tool", "mxfar"},
                             {"version", MXFAR_VERSION},
                             {"command", chosen},
                             {"arguments", arguments},
                             {"config", std::move(config)},
                             {"seed", r.seed},
                             {"threads", resolve_threads(o.threads)},
                             {"inputs", r.inputs},
                             {"outputs", dir->files()},
                             {"status", status},
                             {"duration_seconds", seconds}};
            dir->write("manifest.json", manifest.dump(2) + "\n", false);
        }
        return status;
    } catch (const Error& e) {
        err << "mxfar " << chosen << ": error " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        err << "mxfar " << chosen << ": internal error: " << e.what() << '\n';
        return Internal;
    }
}

}  // namespace mxfar::cli
