// SPDX-License-Identifier: Apache-2.0
//
// vdsm: the whole workflow as one binary.
//
//   vdsm gen-data  --set pendulum --count 200 --out data/pendulum.vdsd
//   vdsm train     --data data/pendulum.vdsd --out runs/a
//   vdsm sample    --ckpt runs/a/checkpoint.vdsm --out runs/a/samples --n 4
//   vdsm swap      --ckpt ... --data ... --factor identity --a 0 --b 1 --out ...
//   vdsm eval      --ckpt ... --data ... --out runs/a/eval.csv
//
// Every command is deterministic under a fixed seed and --threads 1. Errors
// exit nonzero with a single stderr line.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "vdsm/image_io.hpp"
#include "vdsm/persistence.hpp"
#include "vdsm/protocol.hpp"

namespace fs = std::filesystem;
using namespace vdsm;

namespace {

// Bad flag combinations exit 2; runtime failures exit 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

// Precedence: built-in defaults, then the config file, then --kv overrides.
// Subcommand flags are applied on top by the callers.
Config load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    Config cfg = path.empty() ? Config{} : parse_config_file(path);
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw UsageError("--kv expects key=value, got '" + kv + "'");
        cfg.apply_kv(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    return cfg;
}

int resolve_threads(int flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv("VDSM_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw UsageError("VDSM_THREADS must be a positive integer, got '" + std::string(env) + "'");
        return static_cast<int>(v);
    }
    return 1;
}

Tensor frame_at(const Tensor& seq, int t) {
    const int C = seq.dim(1), H = seq.dim(2), W = seq.dim(3);
    Tensor frame({C, H, W});
    const std::int64_t n = frame.size();
    const double* src = seq.data() + static_cast<std::int64_t>(t) * n;
    for (std::int64_t i = 0; i < n; ++i) frame[i] = src[i];
    return frame;
}

const char* stage_name(Stage s) { return s == Stage::pretrain ? "pretrain" : "sequence"; }

// ---- gen-data ----------------------------------------------------------

struct GenOpts {
    std::string config;
    std::vector<std::string> kv;
    std::string out;
    std::string set;
    int count = 0, T = 0, frame_size = 0;
    int colors = 0, speeds = 0, shapes = 0, motions = 0;
    unsigned long long seed = 0;
    bool has_set = false, has_count = false, has_T = false, has_frame_size = false;
    bool has_colors = false, has_speeds = false, has_shapes = false, has_motions = false;
    bool has_seed = false;
    int threads = 0;
};

int cmd_gen_data(const GenOpts& o) {
    Config cfg = load_run_config(o.config, o.kv);
    if (o.has_set) cfg.dataset = o.set;
    if (o.has_count) cfg.gen_count = o.count;
    if (o.has_T) cfg.seq_len = o.T;
    if (o.has_frame_size) cfg.frame_size = o.frame_size;
    if (o.has_colors) cfg.gen_colors = o.colors;
    if (o.has_speeds) cfg.gen_speeds = o.speeds;
    if (o.has_shapes) cfg.gen_shapes = o.shapes;
    if (o.has_motions) cfg.gen_motions = o.motions;
    if (o.has_seed) cfg.seed = o.seed;
    const int threads = resolve_threads(o.threads);

    Dataset ds;
    if (cfg.dataset == "pendulum") {
        ds = gen_pendulum(cfg.gen_colors, cfg.gen_speeds, cfg.seq_len, cfg.gen_count,
                          cfg.frame_size, cfg.seed, threads);
    } else if (cfg.dataset == "shapes") {
        ds = gen_moving_shapes(cfg.gen_shapes, cfg.gen_motions, cfg.seq_len, cfg.gen_count,
                               cfg.frame_size, cfg.seed, threads);
    } else {
        throw UsageError("gen-data: unknown generator '" + cfg.dataset +
                         "' (valid: pendulum, shapes)");
    }
    if (const fs::path dir = fs::path(o.out).parent_path(); !dir.empty())
        fs::create_directories(dir);
    save_dataset(ds, o.out, o.out + ".json");
    std::cout << "wrote " << ds.sequences.size() << " sequences (" << ds.n_identities
              << " identities x " << ds.n_actions << " actions) to " << o.out << "\n";
    return 0;
}

// ---- train --------------------------------------------------------------

struct TrainOpts {
    std::string config;
    std::vector<std::string> kv;
    std::string data;
    std::string out;
    std::string stage = "both";
    bool resume = false;
    int stop_after = -1;
    int threads = 0;
};

int cmd_train(const TrainOpts& o) {
    fs::create_directories(o.out);
    const std::string ckpt = (fs::path(o.out) / "checkpoint.vdsm").string();
    const std::string csv = (fs::path(o.out) / "metrics.csv").string();

    ModelState st;
    if (o.resume) {
        if (!o.config.empty() || !o.kv.empty())
            throw UsageError("train: --resume replays the configuration stored in the "
                             "checkpoint; drop --config/--kv");
        if (!fs::exists(ckpt)) throw UsageError("train: --resume but no checkpoint at " + ckpt);
        st = load_checkpoint(ckpt);
    } else {
        Config cfg = load_run_config(o.config, o.kv);
        cfg.validate();
        st = init_state(cfg);
    }
    const Dataset ds = load_dataset(o.data);

    const bool covers_pretrain = o.stage == "both" || o.stage == "pretrain";
    const bool covers_sequence = o.stage == "both" || o.stage == "sequence";
    if (o.stage == "sequence" && !st.pretrain_complete)
        throw UsageError("train: --stage sequence needs a completed pretraining stage; run "
                         "--stage pretrain (or both) first, then pass --resume");

    std::ofstream mf(csv, o.resume ? std::ios::app : std::ios::trunc);
    if (!mf) throw std::runtime_error("train: cannot write " + csv);
    if (!o.resume) mf << "stage,epoch,recon,kl_s,kl_d,kl_z1,kl_z_trans,lambda_z,lambda_s,tau_s\n";

    const MetricsFn sink = [&](const MetricsRow& r) {
        char buf[320];
        std::snprintf(buf, sizeof buf, "%s,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g",
                      stage_name(r.stage), r.epoch, r.mean.reconstruction, r.mean.kl_s,
                      r.mean.kl_d, r.mean.kl_z1, r.mean.kl_z_trans, r.anneal.lambda_z,
                      r.anneal.lambda_s, r.anneal.tau_s);
        mf << buf << "\n";
        mf.flush();
        const int total =
            r.stage == Stage::pretrain ? st.cfg.epochs_pretrain : st.cfg.epochs_sequence;
        std::cout << "[" << stage_name(r.stage) << "] epoch " << r.epoch + 1 << "/" << total
                  << " loss " << r.mean.weighted_total << std::endl;
    };
    const auto save = [&] {
        save_checkpoint(st, ckpt + ".tmp");
        fs::rename(ckpt + ".tmp", ckpt);
    };

    int budget = o.stop_after < 0 ? std::numeric_limits<int>::max() : o.stop_after;
    if (o.stage == "single") {
        while (budget > 0 && st.epochs_done_sequence < st.cfg.epochs_sequence) {
            train_single_stage(st, ds, 1, sink);
            save();
            --budget;
        }
    } else {
        if (covers_pretrain) {
            while (budget > 0 && st.epochs_done_pretrain < st.cfg.epochs_pretrain) {
                pretrain(st, ds, 1, sink);
                save();
                --budget;
            }
            // A zero-epoch pretraining target still has to be marked complete.
            if (st.stage == Stage::pretrain && !st.pretrain_complete &&
                st.epochs_done_pretrain >= st.cfg.epochs_pretrain) {
                pretrain(st, ds, 0, nullptr);
                save();
            }
        }
        if (covers_sequence && st.pretrain_complete) {
            while (budget > 0 && st.epochs_done_sequence < st.cfg.epochs_sequence) {
                train_sequences(st, ds, 1, sink);
                save();
                --budget;
            }
        }
    }
    save();
    std::cout << "checkpoint " << ckpt << " (pretrain " << st.epochs_done_pretrain << "/"
              << st.cfg.epochs_pretrain << ", sequence " << st.epochs_done_sequence << "/"
              << st.cfg.epochs_sequence << ")\n";
    return 0;
}

// ---- sample -------------------------------------------------------------

struct SampleOpts {
    std::string ckpt;
    std::string out;
    int n = 4;
    int T = 0;
    bool has_T = false;
    unsigned long long seed = 0;
};

int cmd_sample(const SampleOpts& o) {
    if (o.n < 1) throw UsageError("sample: --n must be >= 1");
    const ModelState st = load_checkpoint(o.ckpt);
    const int T = o.has_T ? o.T : st.cfg.seq_len;
    if (T < 1) throw UsageError("sample: --T must be >= 1");

    fs::create_directories(o.out);
    std::vector<Tensor> rows;
    rows.reserve(static_cast<size_t>(o.n));
    for (int i = 0; i < o.n; ++i)
        rows.push_back(generate(st, T, GenerateInit{},
                                o.seed * 1000003ULL + static_cast<unsigned long long>(i)));

    const std::string grid_path = (fs::path(o.out) / "samples.png").string();
    write_png(assemble_grid(rows), grid_path);
    for (int i = 0; i < o.n; ++i) {
        for (int t = 0; t < T; ++t) {
            char name[64];
            std::snprintf(name, sizeof name, "sample%d_frame%02d.png", i, t);
            write_png(frame_at(rows[static_cast<size_t>(i)], t),
                      (fs::path(o.out) / name).string());
        }
    }
    std::cout << "wrote " << grid_path << " and " << o.n * T << " frame images\n";
    return 0;
}

// ---- swap ---------------------------------------------------------------

struct SwapOpts {
    std::string ckpt;
    std::string data;
    std::string factor;
    std::string out;
    int a = 0;
    int b = 1;
};

int cmd_swap(const SwapOpts& o) {
    SwapFactor which;
    if (o.factor == "identity") which = SwapFactor::identity;
    else if (o.factor == "dynamics") which = SwapFactor::dynamics;
    else
        throw UsageError("swap: unknown factor '" + o.factor + "' (valid: identity, dynamics)");

    const ModelState st = load_checkpoint(o.ckpt);
    const Dataset ds = load_dataset(o.data);
    const int n = static_cast<int>(ds.sequences.size());
    if (o.a < 0 || o.a >= n || o.b < 0 || o.b >= n)
        throw UsageError("swap: sequence indices must lie in [0, " + std::to_string(n) +
                         "), got --a " + std::to_string(o.a) + " --b " + std::to_string(o.b));

    const Tensor& base = ds.sequences[static_cast<size_t>(o.a)].frames;
    const Tensor& donor = ds.sequences[static_cast<size_t>(o.b)].frames;
    const Tensor swapped = swap_factors(st, base, donor, which);

    fs::create_directories(o.out);
    char name[96];
    std::snprintf(name, sizeof name, "swap_%s_a%d_b%d.png", o.factor.c_str(), o.a, o.b);
    const std::string path = (fs::path(o.out) / name).string();
    write_png(assemble_grid({base, donor, swapped}), path);
    std::cout << "wrote " << path << "\n";
    return 0;
}

// ---- eval ---------------------------------------------------------------

struct EvalOpts {
    std::string ckpt;
    std::string data;
    std::string out = "eval.csv";
    unsigned long long seed = 0;
    int threads = 0;
};

int cmd_eval(const EvalOpts& o) {
    const ModelState st = load_checkpoint(o.ckpt);
    const Dataset ds = load_dataset(o.data);
    const EvalReport r = run_eval_protocol(st, ds, o.seed, resolve_threads(o.threads));
    if (const fs::path dir = fs::path(o.out).parent_path(); !dir.empty())
        fs::create_directories(dir);
    write_eval_csv(r, o.out);
    for (const ProbeResult& p : r.probes)
        std::cout << "probe " << p.embedding << "->" << p.factor << " " << p.accuracy
                  << " (n_test " << p.n_test << ")\n";
    std::cout << "consistency identity " << r.consistency_identity << " action "
              << r.consistency_action << "\n";
    std::cout << "entropy inter " << r.entropy_inter << " intra " << r.entropy_intra << " ("
              << r.n_generated << " samples)\n";
    std::cout << "wrote " << o.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vdsm: sequence disentanglement lab (datasets, training, sampling, evaluation)"};
    app.require_subcommand(1);

    GenOpts g;
    CLI::App* gen = app.add_subcommand("gen-data", "Render a synthetic dataset to disk");
    gen->add_option("--config", g.config, "key = value configuration file");
    gen->add_option("--kv", g.kv, "config override key=value (repeatable)");
    auto* g_set = gen->add_option("--set", g.set, "generator: pendulum | shapes");
    auto* g_count = gen->add_option("--count", g.count, "number of sequences");
    auto* g_T = gen->add_option("--T", g.T, "frames per sequence");
    auto* g_fs = gen->add_option("--frame-size", g.frame_size, "square frame side in pixels");
    auto* g_col = gen->add_option("--colors", g.colors, "pendulum identity count");
    auto* g_spd = gen->add_option("--speeds", g.speeds, "pendulum action count");
    auto* g_shp = gen->add_option("--shapes", g.shapes, "glyph identity count");
    auto* g_mot = gen->add_option("--motions", g.motions, "glyph action count");
    auto* g_seed = gen->add_option("--seed", g.seed, "generator seed");
    gen->add_option("--threads", g.threads, "render threads (env VDSM_THREADS, default 1)");
    gen->add_option("--out", g.out, "output dataset path (manifest at <out>.json)")->required();

    TrainOpts t;
    CLI::App* train = app.add_subcommand("train", "Run the training protocol");
    train->add_option("--config", t.config, "key = value configuration file");
    train->add_option("--kv", t.kv, "config override key=value (repeatable)");
    train->add_option("--data", t.data, "dataset file from gen-data")->required();
    train->add_option("--out", t.out, "run directory (checkpoint.vdsm, metrics.csv)")->required();
    train->add_option("--stage", t.stage, "both | pretrain | sequence | single")
        ->check(CLI::IsMember({"both", "pretrain", "sequence", "single"}));
    train->add_flag("--resume", t.resume, "continue from <out>/checkpoint.vdsm");
    train->add_option("--stop-after", t.stop_after,
                      "stop this invocation after N epochs (for interruption tests)");
    train->add_option("--threads", t.threads, "accepted for symmetry; training is sequential");

    SampleOpts s;
    CLI::App* sample = app.add_subcommand("sample", "Decode unconditional samples to PNG");
    sample->add_option("--ckpt", s.ckpt, "checkpoint file")->required();
    sample->add_option("--out", s.out, "output directory")->required();
    sample->add_option("--n", s.n, "number of sampled sequences (grid rows)");
    auto* s_T = sample->add_option("--T", s.T, "frames per sample (default: training length)");
    sample->add_option("--seed", s.seed, "sampling seed");

    SwapOpts w;
    CLI::App* swap = app.add_subcommand("swap", "Transplant one factor between two sequences");
    swap->add_option("--ckpt", w.ckpt, "checkpoint file")->required();
    swap->add_option("--data", w.data, "dataset file")->required();
    swap->add_option("--factor", w.factor, "identity | dynamics")->required();
    swap->add_option("--a", w.a, "base sequence index");
    swap->add_option("--b", w.b, "donor sequence index");
    swap->add_option("--out", w.out, "output directory")->required();

    EvalOpts e;
    CLI::App* eval = app.add_subcommand("eval", "Probe matrix, consistency and diversity CSV");
    eval->add_option("--ckpt", e.ckpt, "checkpoint file")->required();
    eval->add_option("--data", e.data, "labeled dataset file")->required();
    eval->add_option("--out", e.out, "output CSV path (default eval.csv)");
    eval->add_option("--seed", e.seed, "protocol seed (probe splits, generation)");
    eval->add_option("--threads", e.threads, "worker threads (env VDSM_THREADS, default 1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        if (err.get_exit_code() == 0) return app.exit(err);
        std::cerr << "vdsm: " << err.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) {
            g.has_set = g_set->count() > 0;
            g.has_count = g_count->count() > 0;
            g.has_T = g_T->count() > 0;
            g.has_frame_size = g_fs->count() > 0;
            g.has_colors = g_col->count() > 0;
            g.has_speeds = g_spd->count() > 0;
            g.has_shapes = g_shp->count() > 0;
            g.has_motions = g_mot->count() > 0;
            g.has_seed = g_seed->count() > 0;
            return cmd_gen_data(g);
        }
        if (train->parsed()) return cmd_train(t);
        if (sample->parsed()) {
            s.has_T = s_T->count() > 0;
            return cmd_sample(s);
        }
        if (swap->parsed()) return cmd_swap(w);
        if (eval->parsed()) return cmd_eval(e);
    } catch (const UsageError& err) {
        std::cerr << "vdsm: " << err.what() << "\n";
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "vdsm: " << err.what() << "\n";
        return 1;
    }
    return 0;
}
