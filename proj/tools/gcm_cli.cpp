// Command-line front end for the GCM propagation library: blind and
// non-blind deblurring, interpolation, edge-preserved smoothing, dataset
// synthesis, metrics, and trace plotting.
//
// Exit codes: 0 success, 1 usage error, 2 numeric/invariant error.
// GCM_THREADS overrides the worker count for multi-image fan-out;
// GCM_TIMING=off pins the "seconds" metric column to 0 for byte-identical
// re-runs.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "gcm/gcm.hpp"

namespace fs = std::filesystem;

namespace {

bool timing_enabled() {
    const char* v = std::getenv("GCM_TIMING");
    if (!v) return true;
    std::string s(v);
    return !(s == "off" || s == "0" || s == "false");
}

unsigned worker_count(std::size_t jobs) {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* v = std::getenv("GCM_THREADS")) {
        try {
            long parsed = std::stol(v);
            if (parsed >= 1) n = unsigned(parsed);
        } catch (const std::exception&) {
            throw gcm::ParameterError("GCM_THREADS must be a positive integer");
        }
    }
    return std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1));
}

/// Run fn(i) for every input index, fanning out across workers. Any
/// worker exception is rethrown after all workers finish.
template <class Fn>
void for_each_input(std::size_t jobs, Fn&& fn) {
    unsigned workers = worker_count(jobs);
    if (workers <= 1) {
        for (std::size_t i = 0; i < jobs; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= jobs) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) parts.push_back(item);
    return parts;
}

gcm::GeneratorSpec parse_generator(const std::string& spec) {
    if (spec == "identity") return gcm::GeneratorSpec::identity();
    if (spec == "shock") return gcm::GeneratorSpec::shock(2, 0.15);
    if (spec.rfind("shock:", 0) == 0) {
        auto parts = split(spec, ':');
        if (parts.size() != 3)
            throw gcm::ParameterError("generator: expected shock:ITERS:DT");
        return gcm::GeneratorSpec::shock(std::stoi(parts[1]), std::stod(parts[2]));
    }
    if (spec == "gauss") return gcm::make_gaussian_smoother(5, 1.0);
    if (spec.rfind("gauss:", 0) == 0) {
        auto parts = split(spec, ':');
        if (parts.size() != 3)
            throw gcm::ParameterError("generator: expected gauss:SIZE:SIGMA");
        return gcm::make_gaussian_smoother(std::stoi(parts[1]), std::stod(parts[2]));
    }
    return gcm::load_generator(spec);
}

gcm::MaskSpec parse_mask(const std::string& spec, const std::string& image_path) {
    if (spec.rfind("random:", 0) == 0) {
        auto parts = split(spec, ':');
        if (parts.size() != 3)
            throw gcm::ParameterError("mask: expected random:FRACTION:SEED");
        return gcm::MaskSpec::random_missing(std::stod(parts[1]),
                                             std::stoull(parts[2]));
    }
    // Mask PNG: 0 = missing, 255 = observed.
    gcm::ImageGrid m = gcm::read_png_gray(spec);
    for (double& v : m.data()) v = v >= 0.5 ? 1.0 : 0.0;
    (void)image_path;
    return gcm::MaskSpec::file(std::move(m));
}

/// Output path for input i: with one input, an explicit -o wins; with
/// several, -o names a directory. Defaults to "<stem><suffix>.<ext>"
/// next to the input.
std::string out_path_for(const std::string& out_opt, const std::string& input,
                         std::size_t n_inputs, const char* suffix, const char* ext) {
    fs::path in(input);
    std::string name = in.stem().string() + suffix + ext;
    if (out_opt.empty()) return (in.parent_path() / name).string();
    if (n_inputs == 1 && !fs::is_directory(out_opt)) return out_opt;
    fs::create_directories(out_opt);
    return (fs::path(out_opt) / name).string();
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    if (!timing_enabled()) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string format_metric(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

constexpr const char* kMetricsHeader = "file,psnr,ssim,ks,er,seconds";

struct DeblurOptions {
    std::vector<std::string> inputs;
    std::string out, kernel_out, trace, generator = "shock";
    std::string levels = "auto";
    gcm::DeblurConfig cfg;
};

void cmd_deblur(const DeblurOptions& opt) {
    gcm::GeneratorSpec G = parse_generator(opt.generator);
    gcm::DeblurConfig base_cfg = opt.cfg;
    if (opt.levels != "auto") {
        base_cfg.max_levels = std::stoi(opt.levels);
        if (base_cfg.max_levels < 1)
            throw gcm::ParameterError("--levels must be 'auto' or >= 1");
    }
    for_each_input(opt.inputs.size(), [&](std::size_t i) {
        const std::string& input = opt.inputs[i];
        std::vector<gcm::ImageGrid> planes = gcm::read_png(input);
        gcm::ImageGrid gray = planes.size() == 1
                                  ? planes[0]
                                  : gcm::luminance(planes[0], planes[1], planes[2]);
        const gcm::DeblurConfig& cfg = base_cfg;
        gcm::DeblurResult result = gcm::deblur(gray, cfg, G);
        std::vector<gcm::ImageGrid> out_planes;
        if (planes.size() == 3) {
            // Kernel from luminance; final non-blind pass per channel.
            for (const gcm::ImageGrid& p : planes)
                out_planes.push_back(gcm::nonblind_deconv(
                    p, result.kernel, gcm::Prior(0.8, cfg.nonblind_lambda),
                    cfg.nonblind_T, nullptr, cfg.nonblind_gamma, cfg.nonblind_mu));
        } else {
            out_planes.push_back(result.latent);
        }
        gcm::write_png(out_path_for(opt.out, input, opt.inputs.size(), "_deblurred", ".png"),
                       out_planes);
        if (!opt.kernel_out.empty())
            gcm::write_kernel_text(
                out_path_for(opt.kernel_out, input, opt.inputs.size(), "_kernel", ".txt"),
                result.kernel);
        if (!opt.trace.empty())
            gcm::write_trace(
                out_path_for(opt.trace, input, opt.inputs.size(), "_trace", ".csv"),
                result.nonblind_trace);
        if (result.degenerate_warning)
            std::cerr << input << ": warning: kernel collapsed toward a delta with no "
                         "objective progress\n";
    });
}

struct NonblindOptions {
    std::string input, kernel, out, trace;
    double lambda = 1e-4;
    int T = 60;
};

void cmd_nonblind(const NonblindOptions& opt) {
    gcm::BlurKernel k = gcm::read_kernel_text(opt.kernel);
    std::vector<gcm::ImageGrid> planes = gcm::read_png(opt.input);
    std::vector<gcm::StepRecord> trace;
    std::vector<gcm::ImageGrid> out_planes;
    for (const gcm::ImageGrid& p : planes)
        out_planes.push_back(gcm::nonblind_deconv(p, k, gcm::Prior(0.8, opt.lambda), opt.T,
                                                  out_planes.empty() ? &trace : nullptr));
    gcm::write_png(out_path_for(opt.out, opt.input, 1, "_restored", ".png"), out_planes);
    if (!opt.trace.empty()) gcm::write_trace(opt.trace, trace);
}

struct InterpOptions {
    std::vector<std::string> inputs;
    std::string mask, out, generator = "gauss:5:1.0";
    gcm::RestoreConfig cfg;
};

void cmd_interp(const InterpOptions& opt) {
    gcm::GeneratorSpec G = parse_generator(opt.generator);
    for_each_input(opt.inputs.size(), [&](std::size_t i) {
        const std::string& input = opt.inputs[i];
        gcm::MaskSpec mask = parse_mask(opt.mask, input);
        std::vector<gcm::ImageGrid> planes = gcm::read_png(input);
        std::vector<gcm::ImageGrid> out_planes;
        for (const gcm::ImageGrid& p : planes)
            out_planes.push_back(gcm::interpolate(p, mask, G, opt.cfg));
        gcm::write_png(out_path_for(opt.out, input, opt.inputs.size(), "_filled", ".png"),
                       out_planes);
    });
}

struct SmoothOptions {
    std::vector<std::string> inputs;
    std::string out, generator = "identity";
    double lambda0 = 2.0;
    gcm::RestoreConfig cfg;
};

void cmd_smooth(const SmoothOptions& opt) {
    gcm::GeneratorSpec G = parse_generator(opt.generator);
    for_each_input(opt.inputs.size(), [&](std::size_t i) {
        const std::string& input = opt.inputs[i];
        std::vector<gcm::ImageGrid> planes = gcm::read_png(input);
        std::vector<gcm::ImageGrid> out_planes;
        for (const gcm::ImageGrid& p : planes) {
            gcm::ImageGrid s = gcm::smooth(p, opt.lambda0, G, opt.cfg);
            s.clamp01();
            out_planes.push_back(std::move(s));
        }
        gcm::write_png(out_path_for(opt.out, input, opt.inputs.size(), "_smoothed", ".png"),
                       out_planes);
    });
}

struct SynthOptions {
    std::vector<std::string> inputs;
    std::string kernel, out, kernel_out;
    double sigma = 0.0;
    std::uint64_t seed = 1;
};

void cmd_synth(const SynthOptions& opt) {
    gcm::BlurKernel k = gcm::BlurKernel::delta(1);
    if (opt.kernel.rfind("motion:", 0) == 0) {
        auto parts = split(opt.kernel, ':');
        if (parts.size() != 3)
            throw gcm::ParameterError("--kernel: expected motion:SIZE:SEED or a file path");
        k = gcm::make_motion_kernel(std::stoi(parts[1]), std::stoull(parts[2]));
    } else {
        k = gcm::read_kernel_text(opt.kernel);
    }
    for_each_input(opt.inputs.size(), [&](std::size_t i) {
        const std::string& input = opt.inputs[i];
        std::vector<gcm::ImageGrid> planes = gcm::read_png(input);
        std::vector<gcm::ImageGrid> out_planes;
        for (std::size_t c = 0; c < planes.size(); ++c)
            out_planes.push_back(gcm::synth_blur(planes[c], k, opt.sigma, opt.seed + c));
        gcm::write_png(out_path_for(opt.out, input, opt.inputs.size(), "_blurred", ".png"),
                       out_planes);
    });
    if (!opt.kernel_out.empty()) gcm::write_kernel_text(opt.kernel_out, k);
}

struct EvalOptions {
    std::string restored, truth, kernel_est, kernel_true, blurry, csv;
    double er_lambda = 1e-4;
    int er_T = 60;
};

void cmd_eval(const EvalOptions& opt) {
    auto start = std::chrono::steady_clock::now();
    gcm::ImageGrid restored = gcm::read_png_gray(opt.restored);
    gcm::ImageGrid truth = gcm::read_png_gray(opt.truth);
    double p = gcm::psnr(restored, truth);
    double s = gcm::ssim(restored, truth);
    double ks = std::numeric_limits<double>::quiet_NaN();
    double er = std::numeric_limits<double>::quiet_NaN();
    if (!opt.kernel_est.empty() && !opt.kernel_true.empty()) {
        gcm::BlurKernel ke = gcm::read_kernel_text(opt.kernel_est);
        gcm::BlurKernel kt = gcm::read_kernel_text(opt.kernel_true);
        ks = gcm::kernel_similarity(ke, kt);
        if (!opt.blurry.empty()) {
            // Reference restoration with the ground-truth kernel, same
            // non-blind method; ER = SSD(restored)/SSD(reference).
            gcm::ImageGrid blurry = gcm::read_png_gray(opt.blurry);
            gcm::ImageGrid ref = gcm::nonblind_deconv(blurry, kt,
                                                      gcm::Prior(0.8, opt.er_lambda),
                                                      opt.er_T);
            er = gcm::error_ratio(restored, ref, truth);
        }
    }
    std::ostringstream row;
    row << kMetricsHeader << "\n"
        << opt.restored << "," << format_metric(p) << "," << format_metric(s) << ","
        << format_metric(ks) << "," << format_metric(er) << ","
        << format_metric(elapsed_seconds(start)) << "\n";
    std::cout << row.str();
    if (!opt.csv.empty()) {
        std::ofstream os(opt.csv, std::ios::binary);
        if (!os) throw gcm::LoadError("eval: cannot open " + opt.csv);
        os << row.str();
    }
}

struct TracePlotOptions {
    std::string input, out;
};

void cmd_trace_plot(const TracePlotOptions& opt) {
    std::ifstream is(opt.input);
    if (!is) throw gcm::LoadError("trace-plot: cannot open " + opt.input);
    std::string line;
    if (!std::getline(is, line) || line.rfind("t,psi_u", 0) != 0)
        throw gcm::LoadError("trace-plot: not an engine trace CSV");
    std::ostringstream out;
    for (char& c : line)
        if (c == ',') c = ' ';
    out << "# " << line << "\n";
    while (std::getline(is, line)) {
        for (char& c : line)
            if (c == ',') c = ' ';
        out << line << "\n";
    }
    if (opt.out.empty()) {
        std::cout << out.str();
    } else {
        std::ofstream os(opt.out, std::ios::binary);
        if (!os) throw gcm::LoadError("trace-plot: cannot open " + opt.out);
        os << out.str();
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GCM collaborative propagation: blind deblurring and restoration"};
    app.require_subcommand(1);

    DeblurOptions dbl;
    CLI::App* deblur = app.add_subcommand("deblur", "Blind deblurring of PNG images");
    deblur->add_option("inputs", dbl.inputs, "Input PNGs")
        ->required()
        ->check(CLI::ExistingFile);
    deblur->add_option("-o,--out", dbl.out, "Output PNG (or directory for several inputs)");
    deblur->add_option("--kernel-size", dbl.cfg.kernel_size, "Assumed odd kernel support");
    deblur->add_option("--generator", dbl.generator,
                       "identity | shock[:ITERS:DT] | gauss[:SIZE:SIGMA] | weight file");
    deblur->add_option("--levels", dbl.levels, "'auto' or a maximum pyramid depth");
    deblur->add_option("--trace", dbl.trace, "Write the final non-blind engine trace CSV");
    deblur->add_option("--kernel-out", dbl.kernel_out, "Write estimated kernel (text format)");
    deblur->add_option("--lambda", dbl.cfg.lambda_grad, "Gradient-prior weight");
    deblur->add_option("--gamma", dbl.cfg.gamma, "Warm-start weight");
    deblur->add_option("--mu", dbl.cfg.mu, "Corrector step size");
    deblur->add_option("--inner-T", dbl.cfg.inner_T, "Engine steps per alternation");
    deblur->add_option("--outer-iters", dbl.cfg.outer_iters, "Alternations per level");
    deblur->add_option("--scale-step", dbl.cfg.scale_step, "Pyramid scale factor in (0,1)");
    deblur->add_option("--nonblind-T", dbl.cfg.nonblind_T, "Final non-blind iterations");
    deblur->add_option("--nonblind-lambda", dbl.cfg.nonblind_lambda,
                       "Final non-blind prior weight");
    deblur->add_option("--nonblind-gamma", dbl.cfg.nonblind_gamma,
                       "Final non-blind warm-start weight");
    deblur->add_option("--nonblind-mu", dbl.cfg.nonblind_mu, "Final non-blind corrector step");
    deblur->add_flag("--edge-taper", dbl.cfg.edge_taper,
                     "Taper borders before spectral solves (photographs)");

    NonblindOptions nbl;
    CLI::App* nonblind =
        app.add_subcommand("nonblind", "Non-blind deconvolution with a known kernel");
    nonblind->add_option("input", nbl.input, "Blurry PNG")->required()->check(CLI::ExistingFile);
    nonblind->add_option("kernel", nbl.kernel, "Kernel text file")
        ->required()
        ->check(CLI::ExistingFile);
    nonblind->add_option("-o,--out", nbl.out, "Output PNG");
    nonblind->add_option("--lambda", nbl.lambda, "Prior weight");
    nonblind->add_option("--T", nbl.T, "Engine iterations");
    nonblind->add_option("--trace", nbl.trace, "Write engine trace CSV");

    InterpOptions itp;
    CLI::App* interp = app.add_subcommand("interp", "Masked-fidelity interpolation");
    interp->add_option("inputs", itp.inputs, "Input PNGs")
        ->required()
        ->check(CLI::ExistingFile);
    interp->add_option("--mask", itp.mask, "Mask PNG (0=missing) or random:FRACTION:SEED")
        ->required();
    interp->add_option("-o,--out", itp.out, "Output PNG (or directory)");
    interp->add_option("--generator", itp.generator, "Generator spec (default gauss:5:1.0)");
    interp->add_option("--lambda", itp.cfg.lambda, "Gradient-prior weight");
    interp->add_option("--beta", itp.cfg.beta, "Lift stiffness");
    interp->add_option("--mu", itp.cfg.mu, "Corrector step size");
    interp->add_option("--T", itp.cfg.T, "Engine iterations");

    SmoothOptions smo;
    CLI::App* smooth = app.add_subcommand("smooth", "Edge-preserved smoothing");
    smooth->add_option("inputs", smo.inputs, "Input PNGs")
        ->required()
        ->check(CLI::ExistingFile);
    smooth->add_option("--lambda0", smo.lambda0, "Gradient-count weight")->required();
    smooth->add_option("-o,--out", smo.out, "Output PNG (or directory)");
    smooth->add_option("--generator", smo.generator, "Generator spec (default identity)");
    smooth->add_option("--beta", smo.cfg.beta, "Lift stiffness");
    smooth->add_option("--mu", smo.cfg.mu, "Corrector step size");
    smooth->add_option("--T", smo.cfg.T, "Engine iterations");

    SynthOptions syn;
    CLI::App* synth = app.add_subcommand("synth", "Synthesize blurred observations");
    synth->add_option("inputs", syn.inputs, "Sharp PNGs")->required()->check(CLI::ExistingFile);
    synth->add_option("--kernel", syn.kernel, "Kernel text file or motion:SIZE:SEED")
        ->required();
    synth->add_option("--sigma", syn.sigma, "Gaussian noise standard deviation");
    synth->add_option("--seed", syn.seed, "Noise seed");
    synth->add_option("-o,--out", syn.out, "Output PNG (or directory)");
    synth->add_option("--kernel-out", syn.kernel_out, "Also save the kernel (text format)");

    EvalOptions evl;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Emit a metrics table (CSV)");
    eval_cmd->add_option("restored", evl.restored, "Restored PNG")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("truth", evl.truth, "Ground-truth PNG")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--kernel-est", evl.kernel_est, "Estimated kernel (text)")
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--kernel-true", evl.kernel_true, "Ground-truth kernel (text)")
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--blurry", evl.blurry,
                         "Blurry PNG; enables the error-ratio column")
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--csv", evl.csv, "Also write the table to this file");

    TracePlotOptions tpl;
    CLI::App* trace_plot =
        app.add_subcommand("trace-plot", "Convert a trace CSV to a gnuplot data file");
    trace_plot->add_option("input", tpl.input, "Trace CSV")
        ->required()
        ->check(CLI::ExistingFile);
    trace_plot->add_option("-o,--out", tpl.out, "Output data file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*deblur) cmd_deblur(dbl);
        if (*nonblind) cmd_nonblind(nbl);
        if (*interp) cmd_interp(itp);
        if (*smooth) cmd_smooth(smo);
        if (*synth) cmd_synth(syn);
        if (*eval_cmd) cmd_eval(evl);
        if (*trace_plot) cmd_trace_plot(tpl);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
