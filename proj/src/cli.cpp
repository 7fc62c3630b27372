#include "sep/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sep/harness.hpp"
#include "sep/pipeline.hpp"
#include "sep/wav.hpp"

namespace sep {

namespace {

namespace fs = std::filesystem;

struct SepFlags {
    std::string mix;
    std::string matrix;
    std::string out_dir = "out";
    std::string algo = "amp";
    double theta = -1.0;
    int max_iter = -1;
    double tol = 1e-6;
    double rho = 0.6;
    double mu = 0.0;
    double sigma2 = 5.0;
    double snr_db = 40.0;
    int frame_len = 1024;
    double overlap = 0.70;
    int trunc_len = 720;
    int block_size = -1;
    std::string em_noise = "on";
    int parallel = 0;
    std::uint64_t seed = 1;
};

struct BenchFlags {
    int M = 2;
    int N = 3;
    int T = 1;
    double rho = 0.6;
    double mu = 0.0;
    double sigma2 = 5.0;
    double snr_db = 40.0;
    int instances = 5;
    std::uint64_t seed = 1;
    std::string matrix_kind = "unit-column";
    std::string algo = "both";
    std::vector<double> thetas{1.0};
    std::vector<int> max_iters{30};
    double tol = 0.0;
    std::string em_noise = "off";
    int parallel = 0;
    std::string out;
    std::string sisec_dir;
    int frame_len = 1024;
    double overlap = 0.70;
    int trunc_len = 720;
};

void add_separation_flags(CLI::App* cmd, SepFlags& f, bool require_io) {
    auto* mix = cmd->add_option("--mix", f.mix, "Input mixture WAV (one channel per microphone)");
    auto* mat = cmd->add_option("--matrix", f.matrix, "Mixing matrix CSV, row-major M x N");
    if (require_io) {
        mix->required();
        mat->required();
    }
    cmd->add_option("--out-dir", f.out_dir, "Output directory for source WAVs and diagnostics");
    cmd->add_option("--algo", f.algo, "Solver")->check(CLI::IsMember({"amp", "vamp"}));
    cmd->add_option("--theta", f.theta, "Damping in (0, 1]; <=0 picks 0.75 amp / 0.95 vamp");
    cmd->add_option("--max-iter", f.max_iter, "Solver iterations; <=0 picks the per-algo default");
    cmd->add_option("--tol", f.tol, "Relative-change stop; 0 always runs max-iter");
    cmd->add_option("--rho", f.rho, "Prior activity probability");
    cmd->add_option("--mu", f.mu, "Prior active mean");
    cmd->add_option("--sigma2", f.sigma2, "Prior active variance");
    cmd->add_option("--snr-db", f.snr_db, "Assumed mixture SNR for the initial noise precision");
    cmd->add_option("--frame-len", f.frame_len, "STFT frame length (even)");
    cmd->add_option("--overlap", f.overlap, "STFT overlap fraction in [0, 1)");
    cmd->add_option("--trunc-len", f.trunc_len, "Retained coefficients per frame");
    cmd->add_option("--block-size", f.block_size, "Solver block size; must equal trunc-len");
    cmd->add_option("--em-noise", f.em_noise, "Noise-precision learning")
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--parallel", f.parallel, "Worker threads; <=0 uses hardware concurrency");
    cmd->add_option("--seed", f.seed, "Seed echoed into the config (separation is deterministic)");
    cmd->set_config("--config", "", "Flat key=value config file; flags override file values");
}

SeparationConfig to_config(const SepFlags& f) {
    SeparationConfig cfg;
    cfg.algo = f.algo == "vamp" ? Algo::vamp : Algo::amp;
    cfg.stft.frame_len = f.frame_len;
    cfg.stft.overlap = f.overlap;
    cfg.stft.trunc_len = f.trunc_len;
    cfg.prior.rho = f.rho;
    cfg.prior.mu = f.mu;
    cfg.prior.sigma2 = f.sigma2;
    cfg.theta = f.theta;
    cfg.max_iter = f.max_iter;
    cfg.tol = f.tol;
    cfg.em_noise = f.em_noise == "on";
    cfg.block_size = f.block_size;
    cfg.snr_db = f.snr_db;
    cfg.parallel_frames = f.parallel;
    return cfg;
}

int do_separate(const SepFlags& f) {
    const WavData wav = read_wav(f.mix);
    const MixingModel model = load_mixing_csv(f.matrix);
    if (static_cast<int>(wav.channels.size()) != model.rows())
        throw ContractError("mixture has " + std::to_string(wav.channels.size()) +
                            " channels but the matrix has " + std::to_string(model.rows()) +
                            " rows");
    const SeparationConfig cfg = to_config(f);
    cfg.validate();

    const SeparationResult res = separate(wav.channels, model, cfg);

    fs::create_directories(f.out_dir);
    for (size_t j = 0; j < res.sources.size(); ++j) {
        const fs::path p = fs::path(f.out_dir) / ("source_" + std::to_string(j + 1) + ".wav");
        write_wav(p.string(), {res.sources[j]}, wav.sample_rate, WavFormat::float32);
    }

    const fs::path diag_path = fs::path(f.out_dir) / "diagnostics.jsonl";
    std::ofstream diag(diag_path);
    if (!diag) throw ContractError("cannot open " + diag_path.string() + " for writing");
    for (const auto& d : res.per_frame_diagnostics) {
        nlohmann::json rec{{"frame", d.frame},
                           {"iterations", d.iterations},
                           {"final_residual", d.final_residual},
                           {"failed", d.failed}};
        if (d.failed) rec["error"] = d.error;
        diag << rec.dump() << '\n';
    }
    diag.close();

    const size_t failed = res.failed_frames();
    const size_t total = res.per_frame_diagnostics.size();
    if (total > 0 && failed == total) {
        std::cerr << "error: all " << total << " frames failed to solve\n";
        return 2;
    }
    std::cout << "wrote " << res.sources.size() << " sources to " << f.out_dir << " (" << total
              << " frames, " << failed << " failed, " << res.timing_seconds << " s)\n";
    return 0;
}

int do_info(const SepFlags& f) {
    const SeparationConfig cfg = to_config(f);
    cfg.validate();
    std::cout << "mix = " << f.mix << '\n'
              << "matrix = " << f.matrix << '\n'
              << "out-dir = " << f.out_dir << '\n'
              << "algo = " << f.algo << '\n'
              << "theta = " << cfg.resolved_theta() << '\n'
              << "max-iter = " << cfg.resolved_max_iter() << '\n'
              << "tol = " << cfg.tol << '\n'
              << "rho = " << cfg.prior.rho << '\n'
              << "mu = " << cfg.prior.mu << '\n'
              << "sigma2 = " << cfg.prior.sigma2 << '\n'
              << "snr-db = " << cfg.snr_db << '\n'
              << "frame-len = " << cfg.stft.frame_len << '\n'
              << "overlap = " << cfg.stft.overlap << '\n'
              << "hop = " << cfg.stft.hop() << '\n'
              << "trunc-len = " << cfg.stft.trunc_len << '\n'
              << "block-size = " << cfg.resolved_block_size() << '\n'
              << "em-noise = " << (cfg.em_noise ? "on" : "off") << '\n'
              << "parallel = " << cfg.resolved_parallel() << '\n'
              << "seed = " << f.seed << '\n';
    return 0;
}

std::vector<double> mono_channel(const WavData& wav, const std::string& what) {
    if (wav.channels.size() != 1)
        throw ContractError(what + ": expected a mono WAV, got " +
                            std::to_string(wav.channels.size()) + " channels");
    return wav.channels.front();
}

// SiSec-style directory: mix.wav (M channels), A.csv, src_1.wav .. src_N.wav (mono references).
int bench_sisec(const BenchFlags& f, std::ostream& out) {
    const fs::path dir(f.sisec_dir);
    const WavData mix = read_wav((dir / "mix.wav").string());
    const MixingModel model = load_mixing_csv((dir / "A.csv").string());
    if (static_cast<int>(mix.channels.size()) != model.rows())
        throw ContractError("sisec mix.wav channel count does not match A.csv rows");

    std::vector<fs::path> src_paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("src_", 0) == 0 && entry.path().extension() == ".wav")
            src_paths.push_back(entry.path());
    }
    std::sort(src_paths.begin(), src_paths.end());
    if (static_cast<int>(src_paths.size()) != model.cols())
        throw ContractError("found " + std::to_string(src_paths.size()) +
                            " src_*.wav references, matrix expects " +
                            std::to_string(model.cols()));
    std::vector<std::vector<double>> refs;
    for (const auto& p : src_paths) refs.push_back(mono_channel(read_wav(p.string()), p.string()));

    std::vector<std::string> algos;
    if (f.algo == "both") {
        algos = {"amp", "vamp"};
    } else {
        algos = {f.algo};
    }

    out << "algo,theta,max_iter,metric,mean,median,failures\n";
    std::ostringstream body;
    body << std::setprecision(10);
    for (const auto& algo : algos) {
        for (double theta : f.thetas) {
            for (int max_iter : f.max_iters) {
                SepFlags sf;
                sf.algo = algo;
                sf.theta = theta;
                sf.max_iter = max_iter;
                sf.tol = f.tol;
                sf.rho = f.rho;
                sf.mu = f.mu;
                sf.sigma2 = f.sigma2;
                sf.snr_db = f.snr_db;
                sf.frame_len = f.frame_len;
                sf.overlap = f.overlap;
                sf.trunc_len = f.trunc_len;
                sf.em_noise = f.em_noise;
                sf.parallel = f.parallel;
                const SeparationConfig cfg = to_config(sf);
                cfg.validate();
                const SeparationResult res = separate(mix.channels, model, cfg);

                const size_t len =
                    std::min(res.sources.front().size(),
                             std::min_element(refs.begin(), refs.end(),
                                              [](const auto& a, const auto& b) {
                                                  return a.size() < b.size();
                                              })
                                 ->size());
                std::vector<std::vector<double>> est, ref;
                for (const auto& s : res.sources) est.emplace_back(s.begin(), s.begin() + len);
                for (const auto& s : refs) ref.emplace_back(s.begin(), s.begin() + len);
                const MetricReport rep = compute_metrics(est, ref);

                const double sdr = std::accumulate(rep.per_source_sdr.begin(),
                                                   rep.per_source_sdr.end(), 0.0) /
                                   rep.per_source_sdr.size();
                const double sir = std::accumulate(rep.per_source_sir.begin(),
                                                   rep.per_source_sir.end(), 0.0) /
                                   rep.per_source_sir.size();
                const double sar = std::accumulate(rep.per_source_sar.begin(),
                                                   rep.per_source_sar.end(), 0.0) /
                                   rep.per_source_sar.size();
                const size_t failures = res.failed_frames();
                const struct {
                    const char* name;
                    double value;
                } rows[] = {{"nmse_db", rep.nmse_db}, {"sdr", sdr}, {"sir", sir}, {"sar", sar}};
                for (const auto& row : rows)
                    body << algo << ',' << theta << ',' << max_iter << ',' << row.name << ','
                         << row.value << ',' << row.value << ',' << failures << '\n';
            }
        }
    }
    out << body.str();
    return 0;
}

int do_bench(const BenchFlags& f) {
    std::ostringstream csv;
    if (!f.sisec_dir.empty()) {
        bench_sisec(f, csv);
    } else {
        SyntheticSpec spec;
        spec.M = f.M;
        spec.N = f.N;
        spec.T = f.T;
        spec.prior.rho = f.rho;
        spec.prior.mu = f.mu;
        spec.prior.sigma2 = f.sigma2;
        spec.snr_db = f.snr_db;
        spec.num_instances = f.instances;
        spec.seed = f.seed;
        spec.matrix_kind = f.matrix_kind == "iid" ? MatrixKind::iid_gaussian
                                                  : MatrixKind::unit_column_mixing;
        SweepGrid grid;
        grid.thetas = f.thetas;
        grid.max_iters = f.max_iters;
        SweepOptions opts;
        opts.tol = f.tol;
        opts.em_noise = f.em_noise == "on";
        opts.parallel = f.parallel;

        std::vector<Algo> algos;
        if (f.algo == "both") {
            algos = {Algo::amp, Algo::vamp};
        } else {
            algos = {f.algo == "vamp" ? Algo::vamp : Algo::amp};
        }
        bool first = true;
        for (Algo a : algos) {
            std::string table = sweep(spec, a, grid, opts);
            if (!first) table.erase(0, table.find('\n') + 1);  // keep a single header
            csv << table;
            first = false;
        }
    }

    if (f.out.empty()) {
        std::cout << csv.str();
    } else {
        std::ofstream file(f.out);
        if (!file) throw ContractError("cannot open " + f.out + " for writing");
        file << csv.str();
        std::cout << "wrote " << f.out << '\n';
    }
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Underdetermined audio source separation via message passing"};
    app.require_subcommand(1);

    SepFlags sep_flags;
    CLI::App* cmd_sep = app.add_subcommand("separate", "Separate a mixture WAV into source WAVs");
    add_separation_flags(cmd_sep, sep_flags, /*require_io=*/true);

    SepFlags info_flags;
    CLI::App* cmd_info = app.add_subcommand("info", "Print the resolved configuration");
    add_separation_flags(cmd_info, info_flags, /*require_io=*/false);

    BenchFlags bench_flags;
    CLI::App* cmd_bench = app.add_subcommand("bench", "Run synthetic (or SiSec-style) sweeps");
    cmd_bench->add_option("--M", bench_flags.M, "Microphones");
    cmd_bench->add_option("--N", bench_flags.N, "Sources");
    cmd_bench->add_option("--T", bench_flags.T, "Block size");
    cmd_bench->add_option("--rho", bench_flags.rho, "Prior activity probability");
    cmd_bench->add_option("--mu", bench_flags.mu, "Prior active mean");
    cmd_bench->add_option("--sigma2", bench_flags.sigma2, "Prior active variance");
    cmd_bench->add_option("--snr-db", bench_flags.snr_db, "Mixture SNR (inf for noiseless)");
    cmd_bench->add_option("--instances", bench_flags.instances, "Instances per grid point");
    cmd_bench->add_option("--seed", bench_flags.seed, "Base seed; instance k uses seed+k");
    cmd_bench->add_option("--matrix-kind", bench_flags.matrix_kind, "Mixing matrix family")
        ->check(CLI::IsMember({"iid", "unit-column"}));
    cmd_bench->add_option("--algo", bench_flags.algo, "Solver(s) to sweep")
        ->check(CLI::IsMember({"amp", "vamp", "both"}));
    cmd_bench->add_option("--thetas", bench_flags.thetas, "Damping grid")->delimiter(',');
    cmd_bench->add_option("--max-iters", bench_flags.max_iters, "Iteration grid")->delimiter(',');
    cmd_bench->add_option("--tol", bench_flags.tol, "Stop tolerance (0 = run full max-iter)");
    cmd_bench->add_option("--em-noise", bench_flags.em_noise, "Noise-precision learning")
        ->check(CLI::IsMember({"on", "off"}));
    cmd_bench->add_option("--parallel", bench_flags.parallel, "Worker threads");
    cmd_bench->add_option("--out", bench_flags.out, "CSV output path (default: stdout)");
    cmd_bench->add_option("--sisec-dir", bench_flags.sisec_dir,
                          "Directory with mix.wav, A.csv, src_*.wav; sweeps on real audio");
    cmd_bench->add_option("--frame-len", bench_flags.frame_len, "STFT frame length (sisec mode)");
    cmd_bench->add_option("--overlap", bench_flags.overlap, "STFT overlap (sisec mode)");
    cmd_bench->add_option("--trunc-len", bench_flags.trunc_len, "Truncation (sisec mode)");
    cmd_bench->set_config("--config", "", "Flat key=value config file; flags override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (cmd_sep->parsed()) return do_separate(sep_flags);
        if (cmd_info->parsed()) return do_info(info_flags);
        if (cmd_bench->parsed()) return do_bench(bench_flags);
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}

} // namespace sep
