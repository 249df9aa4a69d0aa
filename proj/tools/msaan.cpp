// Command-line front end: train, infer, eval, params, gradcheck.
//
// Option precedence is flag > config file > preset default. The config file
// is flat key=value, one per line, '#' comments. Every command echoes its
// fully resolved configuration before doing any work. MSAAN_THREADS caps
// kernel-internal parallelism.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "msaan/msaan.hpp"

namespace {

using msaan::ModelConfig;
using msaan::RunConfig;

struct Flags {
    std::string config_path;
    std::string preset;
    int scale = 0, blocks = 0, channels = 0, steps = 0, patch = 0, batch = 0, figff_expansion = 0;
    int log_every = 0, checkpoint_every = 0, seeds = 0;
    long long seed = 0;
    double lr = 0, lr_min = 0, fft_weight = 0;
    std::vector<std::string> ablate;
    std::string out, train_dir, hr_dir, checkpoint, input, output, corrupt;
    bool all_combos = false;
};

void add_model_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config_path, "flat key=value configuration file");
    cmd->add_option("--preset", f.preset, "tiny | light | standard");
    cmd->add_option("--scale", f.scale, "upscale factor (2, 3 or 4)");
    cmd->add_option("--blocks", f.blocks, "number of feature-mixer blocks");
    cmd->add_option("--channels", f.channels, "feature width");
    cmd->add_option("--figff-expansion", f.figff_expansion, "feed-forward expansion ratio");
    cmd->add_option("--ablate", f.ablate, "disable a component: leb, gfm, mfa, fg (repeatable)");
    cmd->add_option("--seed", f.seed, "rng seed");
}

void add_train_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--steps", f.steps, "training steps");
    cmd->add_option("--lr", f.lr, "peak learning rate");
    cmd->add_option("--lr-min", f.lr_min, "final learning rate");
    cmd->add_option("--fft-weight", f.fft_weight, "frequency-loss weight");
    cmd->add_option("--patch", f.patch, "LR patch size");
    cmd->add_option("--batch", f.batch, "batch size");
    cmd->add_option("--log-every", f.log_every, "steps between log lines");
    cmd->add_option("--checkpoint-every", f.checkpoint_every, "steps between periodic checkpoints");
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw msaan::IoError("cannot open config file " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        if (!key.empty()) kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

// flag > config file > preset default
class Resolver {
public:
    Resolver(const CLI::App* cmd, std::map<std::string, std::string> file) : cmd_(cmd), file_(std::move(file)) {}

    // count() that tolerates options not registered on this subcommand
    static size_t flag_count(const CLI::App* cmd, const std::string& flag) {
        const CLI::Option* opt = cmd->get_option_no_throw(flag);
        return opt ? opt->count() : 0;
    }

    template <typename T, typename V>
    void apply(const std::string& flag, const std::string& key, const V& flag_value, T& target) const {
        if (flag_count(cmd_, flag) > 0) {
            target = static_cast<T>(flag_value);
        } else if (auto it = file_.find(key); it != file_.end()) {
            std::istringstream is(it->second);
            T v{};
            if (!(is >> v)) throw msaan::DataError("config file: cannot parse " + key + "=" + it->second);
            target = v;
        }
    }

    void apply_string(const std::string& flag, const std::string& key, const std::string& flag_value,
                      std::string& target) const {
        if (flag_count(cmd_, flag) > 0) target = flag_value;
        else if (auto it = file_.find(key); it != file_.end()) target = it->second;
    }

    std::string raw(const std::string& key) const {
        auto it = file_.find(key);
        return it == file_.end() ? std::string() : it->second;
    }

private:
    const CLI::App* cmd_;
    std::map<std::string, std::string> file_;
};

void apply_preset(const std::string& name, RunConfig& cfg) {
    if (name == "tiny") {  // CI-sized; not a benchmark configuration
        cfg.model.n_blocks = 4;
        cfg.model.channels = 20;
        cfg.train.patch_size = 32;
        cfg.train.lr_max = 1e-3f;
    } else if (name == "light") {
        cfg.model.n_blocks = 12;
        cfg.model.channels = 40;
        cfg.train.patch_size = 64;
        cfg.train.lr_max = 1e-3f;
    } else if (name == "standard") {
        cfg.model.n_blocks = 24;
        cfg.model.channels = 60;
        cfg.train.patch_size = 48;
        cfg.train.lr_max = 3e-4f;
    } else {
        throw msaan::ContractViolation("unknown preset '" + name + "' (use tiny, light or standard)");
    }
}

RunConfig resolve_config(const CLI::App* cmd, const Flags& f) {
    std::map<std::string, std::string> file;
    if (!f.config_path.empty()) file = parse_kv_file(f.config_path);
    const Resolver r(cmd, std::move(file));

    RunConfig cfg;
    std::string preset = "light";
    r.apply_string("--preset", "preset", f.preset, preset);
    apply_preset(preset, cfg);

    r.apply("--scale", "scale", f.scale, cfg.model.scale);
    r.apply("--blocks", "blocks", f.blocks, cfg.model.n_blocks);
    r.apply("--channels", "channels", f.channels, cfg.model.channels);
    r.apply("--figff-expansion", "figff_expansion", f.figff_expansion, cfg.model.figff_expansion);
    r.apply("--steps", "steps", f.steps, cfg.train.total_steps);
    r.apply("--lr", "lr", f.lr, cfg.train.lr_max);
    r.apply("--lr-min", "lr_min", f.lr_min, cfg.train.lr_min);
    r.apply("--fft-weight", "fft_weight", f.fft_weight, cfg.train.fft_weight);
    r.apply("--patch", "patch", f.patch, cfg.train.patch_size);
    r.apply("--batch", "batch", f.batch, cfg.train.batch_size);
    r.apply("--seed", "seed", f.seed, cfg.train.seed);
    r.apply("--log-every", "log_every", f.log_every, cfg.log_every);
    r.apply("--checkpoint-every", "checkpoint_every", f.checkpoint_every, cfg.checkpoint_every);
    r.apply_string("--out", "out", f.out, cfg.out_dir);
    r.apply_string("--train-dir", "train_dir", f.train_dir, cfg.train_dir);
    r.apply_string("--hr-dir", "hr_dir", f.hr_dir, cfg.val_dir);
    r.apply_string("--checkpoint", "checkpoint", f.checkpoint, cfg.checkpoint);

    std::vector<std::string> ablate = f.ablate;
    if (Resolver::flag_count(cmd, "--ablate") == 0) {
        std::stringstream ss(r.raw("ablate"));
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (!tok.empty()) ablate.push_back(tok);
        }
    }
    for (const auto& a : ablate) {
        if (a == "leb") cfg.model.use_leb = false;
        else if (a == "gfm") cfg.model.use_gfm = false;
        else if (a == "mfa") cfg.model.use_mfa = false;
        else if (a == "fg") cfg.model.use_fg = false;
        else throw msaan::ContractViolation("unknown --ablate value '" + a + "' (use leb, gfm, mfa or fg)");
    }
    return cfg;
}

int cmd_train(const CLI::App* cmd, const Flags& f) {
    RunConfig cfg = resolve_config(cmd, f);
    if (cfg.train_dir.empty()) throw msaan::ContractViolation("train requires --train-dir");
    const msaan::TrainResult result = msaan::train_run(cfg, std::cout);
    std::ofstream trace(cfg.out_dir + "/loss_trace.txt", std::ios::trunc);
    trace << std::setprecision(9);
    for (double l : result.losses) trace << l << "\n";
    std::cout << "final checkpoint: " << result.final_checkpoint << "\n";
    return 0;
}

int cmd_infer(const CLI::App* cmd, const Flags& f) {
    RunConfig cfg = resolve_config(cmd, f);
    if (cfg.checkpoint.empty() || f.input.empty() || f.output.empty())
        throw msaan::ContractViolation("infer requires --checkpoint, --input and --output");
    const msaan::Checkpoint ckpt = msaan::load_checkpoint(cfg.checkpoint);
    if (Resolver::flag_count(cmd, "--scale") > 0 && cfg.model.scale != ckpt.config.scale)
        throw msaan::DataError("requested scale " + std::to_string(cfg.model.scale) +
                               " does not match checkpoint scale " + std::to_string(ckpt.config.scale));
    cfg.model = ckpt.config;
    std::cout << "# resolved configuration\n" << cfg.echo() << "input=" << f.input << "\noutput=" << f.output << "\n";
    const msaan::Image lr = msaan::load_image(f.input);
    const msaan::Image sr = msaan::infer_image(ckpt.config, ckpt.store, lr);
    msaan::save_image(sr, f.output);
    std::cout << "wrote " << f.output << " (" << sr.width << "x" << sr.height << ")\n";
    return 0;
}

int cmd_eval(const CLI::App* cmd, const Flags& f) {
    RunConfig cfg = resolve_config(cmd, f);
    if (cfg.checkpoint.empty() || cfg.val_dir.empty())
        throw msaan::ContractViolation("eval requires --checkpoint and --hr-dir");
    const msaan::Checkpoint ckpt = msaan::load_checkpoint(cfg.checkpoint);
    if (Resolver::flag_count(cmd, "--scale") > 0 && cfg.model.scale != ckpt.config.scale)
        throw msaan::DataError("requested scale " + std::to_string(cfg.model.scale) +
                               " does not match checkpoint scale " + std::to_string(ckpt.config.scale));
    cfg.model = ckpt.config;
    std::cout << "# resolved configuration\n" << cfg.echo();
    const msaan::EvalReport report = msaan::eval_dir(ckpt.config, ckpt.store, cfg.val_dir);
    std::cout << report.to_table();
    if (Resolver::flag_count(cmd, "--out") > 0) {
        std::filesystem::create_directories(cfg.out_dir);
        std::ofstream tsv(cfg.out_dir + "/eval.tsv", std::ios::trunc);
        tsv << report.to_tsv();
        std::cout << "wrote " << cfg.out_dir << "/eval.tsv\n";
    }
    return 0;
}

void print_param_table(const ModelConfig& mc) {
    const msaan::ParamCount pc = msaan::param_count(mc);
    for (const auto& row : pc.rows)
        std::cout << std::setw(12) << std::left << row.component << std::setw(12) << std::right << row.params
                  << "\n";
    std::cout << std::setw(12) << std::left << "total" << std::setw(12) << std::right << pc.total << "\n";
}

int cmd_params(const CLI::App* cmd, const Flags& f) {
    RunConfig cfg = resolve_config(cmd, f);
    std::cout << "# resolved configuration\n" << cfg.echo();
    print_param_table(cfg.model);
    if (f.all_combos) {
        std::cout << "\n# all ablation combinations (leb gfm mfa fg -> total)\n";
        for (int mask = 0; mask < 16; ++mask) {
            ModelConfig mc = cfg.model;
            mc.use_leb = mask & 1;
            mc.use_gfm = mask & 2;
            mc.use_mfa = mask & 4;
            mc.use_fg = mask & 8;
            std::cout << (mc.use_leb ? "leb " : "--- ") << (mc.use_gfm ? "gfm " : "--- ")
                      << (mc.use_mfa ? "mfa " : "--- ") << (mc.use_fg ? "fg  " : "--- ") << " -> "
                      << msaan::param_count(mc).total << "\n";
        }
    }
    return 0;
}

int cmd_gradcheck(const CLI::App* cmd, const Flags& f) {
    RunConfig cfg = resolve_config(cmd, f);
    int seeds = 5;
    if (Resolver::flag_count(cmd, "--seeds") > 0) seeds = f.seeds;
    std::cout << "# resolved configuration\n" << cfg.echo() << "seeds=" << seeds << "\n";
    const msaan::GradSuiteReport report =
        msaan::run_gradcheck_suite(cfg.train.seed, seeds, f.corrupt);
    for (const auto& k : report.kernels) {
        std::cout << std::setw(22) << std::left << k.name << " max rel err " << std::scientific
                  << std::setprecision(3) << k.max_rel_err << std::defaultfloat;
        if (k.skipped > 0) std::cout << "  (skipped " << k.skipped << " nonsmooth point(s))";
        std::cout << (k.pass ? "  ok" : "  FAIL") << "\n";
    }
    std::cout << (report.pass ? "gradcheck passed" : "gradcheck FAILED") << " in " << std::fixed
              << std::setprecision(1) << report.seconds << "s\n";
    if (!report.pass) throw msaan::NumericError("gradient check failed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"super-resolution engine: training, inference and evaluation"};
    app.require_subcommand(1);

    Flags f;
    auto* train = app.add_subcommand("train", "train a model on a directory of HR images");
    add_model_flags(train, f);
    add_train_flags(train, f);
    train->add_option("--train-dir", f.train_dir, "directory of HR training images");
    train->add_option("--out", f.out, "output directory for checkpoints and logs");

    auto* infer = app.add_subcommand("infer", "super-resolve one image with a checkpoint");
    add_model_flags(infer, f);
    infer->add_option("--checkpoint", f.checkpoint, "checkpoint file");
    infer->add_option("--input", f.input, "input LR image");
    infer->add_option("--output", f.output, "output SR image path");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint against a directory of HR images");
    add_model_flags(eval, f);
    eval->add_option("--checkpoint", f.checkpoint, "checkpoint file");
    eval->add_option("--hr-dir", f.hr_dir, "directory of HR reference images");
    eval->add_option("--out", f.out, "directory for the machine-readable report");

    auto* params = app.add_subcommand("params", "print the analytic parameter count breakdown");
    add_model_flags(params, f);
    params->add_flag("--all-combos", f.all_combos, "print totals for all 16 ablation combinations");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference validation of every adjoint");
    add_model_flags(gradcheck, f);
    gradcheck->add_option("--seeds", f.seeds, "number of seeds to run");
    gradcheck->add_option("--corrupt", f.corrupt, "deliberately corrupt one component's adjoint (testing hook)")
        ->group("");  // hidden

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (train->parsed()) return cmd_train(train, f);
        if (infer->parsed()) return cmd_infer(infer, f);
        if (eval->parsed()) return cmd_eval(eval, f);
        if (params->parsed()) return cmd_params(params, f);
        if (gradcheck->parsed()) return cmd_gradcheck(gradcheck, f);
    } catch (const msaan::ContractViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const msaan::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const msaan::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
