// Command-line front end: dataset generation, training, guided sampling,
// evaluation, the ablation grid, and curriculum trace inspection.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "sdiff/config.hpp"
#include "sdiff/trainer.hpp"

namespace fs = std::filesystem;
using namespace sdiff;

namespace {

RunConfig load_run_config(const std::string& path, std::optional<uint64_t> seed_override) {
    RunConfig cfg = load_config(path);
    if (seed_override) cfg.seed = *seed_override;
    validate(cfg);
    return cfg;
}

Dataset read_split(const std::string& data_dir, const char* split) {
    const fs::path dir = fs::path(data_dir) / split;
    if (!fs::exists(dir / "manifest.tsv"))
        throw std::runtime_error("no " + std::string(split) + " split under " + data_dir +
                                 "; run gen-data first");
    return read_dataset(dir.string());
}

void write_frames(const Tensor& frames, const fs::path& dir, const std::string& stem, int c) {
    fs::create_directories(dir);
    const int n = frames.dim(0), h = frames.dim(1), w = frames.dim(2);
    const size_t fe = size_t(h) * w * c;
    for (int i = 0; i < n; ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "%s_%02d.%s", stem.c_str(), i, c == 3 ? "ppm" : "pgm");
        std::ofstream out(dir / name, std::ios::binary);
        out << (c == 3 ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
        std::vector<unsigned char> buf(fe);
        for (size_t j = 0; j < fe; ++j)
            buf[j] = (unsigned char)std::lround(frames[size_t(i) * fe + j] * 255.0);
        out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    }
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::optional<uint64_t> seed) {
    const RunConfig cfg = load_run_config(config_path, seed);
    Dataset all = generate_dataset(cfg.gen_config(), cfg.data_count, cfg.seed);
    auto [train, eval_set] = split_dataset(all, cfg.data_holdout);
    write_dataset(train, (fs::path(out_dir) / "train").string());
    write_dataset(eval_set, (fs::path(out_dir) / "eval").string());
    std::cout << manifest_to_string(all.manifest);
    std::fprintf(stderr, "wrote %zu train / %zu eval clips under %s\n", train.size(),
                 eval_set.size(), out_dir.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, std::optional<uint64_t> seed,
              const std::string& resume) {
    const RunConfig cfg = load_run_config(config_path, seed);
    Dataset train = read_split(data_dir, "train");
    Dataset eval_set = read_split(data_dir, "eval");
    TrainOutcome out = run_training(cfg, train, eval_set, out_dir, resume);
    std::fprintf(stderr, "trained steps %ld..%ld; eval loss %.6f -> %.6f\n", out.first_step,
                 cfg.train_steps, out.eval_initial, out.eval_final);
    std::cout << "eval_loss_initial," << out.eval_initial << "\n";
    std::cout << "eval_loss_final," << out.eval_final << "\n";
    return 0;
}

int cmd_sample(const std::string& config_path, const std::string& checkpoint,
               const std::string& task_str, const std::string& data_dir,
               const std::string& clip_id, const std::string& caption_str,
               const std::string& out_dir, std::optional<uint64_t> seed) {
    const RunConfig cfg = load_run_config(config_path, seed);
    uint64_t ckpt_hash = 0;
    ParamSet params = load_params(checkpoint, &ckpt_hash);
    if (ckpt_hash != config_hash(cfg))
        throw std::runtime_error("checkpoint was trained with a different config");

    const Task task = task_of(task_str);
    Dataset eval_set = read_split(data_dir, "eval");
    int idx = -1;
    for (size_t i = 0; i < eval_set.manifest.records.size(); ++i)
        if (eval_set.manifest.records[i].id == clip_id) idx = int(i);
    if (idx < 0) throw std::runtime_error("clip '" + clip_id + "' not in the eval split");

    SpriteClip guidance = eval_set.clips[size_t(idx)];
    guidance.frames = canonical_frames(guidance, cfg.sample_frames);
    if (!caption_str.empty()) {
        std::vector<int> tokens;
        std::istringstream is(caption_str);
        std::string word;
        while (is >> word) {
            const int tok = token_of(word);
            if (tok < 0) throw std::runtime_error("unknown caption token '" + word + "'");
            tokens.push_back(tok);
        }
        guidance.caption = tokens;
    }

    Rng mask_rng(mix64(cfg.seed ^ 0x6d61736bull));
    const ConditionMask cmask = make_condition_mask(task, cfg.sample_frames, mask_rng);
    const Tensor out = sample_guided(cfg, params, guidance, cmask, cfg.seed);

    write_frames(out, out_dir, "frame", cfg.data_channels);
    std::ofstream manifest(fs::path(out_dir) / "sample.tsv", std::ios::app);
    manifest << clip_id << "\t" << task_name(task) << "\t" << cfg.sample_frames << "\t";
    for (size_t i = 0; i < guidance.caption.size(); ++i)
        manifest << (i ? "," : "") << guidance.caption[i];
    manifest << "\tframe\n";
    std::fprintf(stderr, "wrote %d frames to %s\n", cfg.sample_frames, out_dir.c_str());
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& data_dir, const std::string& out_dir,
             std::optional<uint64_t> seed) {
    const RunConfig cfg = load_run_config(config_path, seed);
    uint64_t ckpt_hash = 0;
    ParamSet params = load_params(checkpoint, &ckpt_hash);
    if (ckpt_hash != config_hash(cfg))
        throw std::runtime_error("checkpoint was trained with a different config");
    Dataset eval_set = read_split(data_dir, "eval");
    const auto rows = evaluate_checkpoint(cfg, params, eval_set, cfg.seed);
    const std::string csv = eval_report_csv(rows);
    std::cout << csv;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream out(fs::path(out_dir) / "report.csv");
        out << csv;
    }
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir,
               const std::string& seeds_str) {
    const RunConfig cfg = load_run_config(config_path, std::nullopt);
    std::vector<uint64_t> seeds;
    std::istringstream is(seeds_str);
    std::string tok;
    while (std::getline(is, tok, ',')) seeds.push_back(std::stoull(tok));
    if (seeds.empty()) throw std::runtime_error("no seeds given");

    fs::create_directories(out_dir);
    const fs::path data_dir = fs::path(out_dir) / "data";
    Dataset train, eval_set;
    if (fs::exists(data_dir / "train" / "manifest.tsv")) {
        train = read_dataset((data_dir / "train").string());
        eval_set = read_dataset((data_dir / "eval").string());
    } else {
        Dataset all = generate_dataset(cfg.gen_config(), cfg.data_count, cfg.seed);
        auto split = split_dataset(all, cfg.data_holdout);
        train = std::move(split.first);
        eval_set = std::move(split.second);
        write_dataset(train, (data_dir / "train").string());
        write_dataset(eval_set, (data_dir / "eval").string());
    }

    const AblationResult result = run_ablation(cfg, train, eval_set, seeds, true);
    const std::string csv = ablation_csv(result);
    std::cout << csv;
    std::ofstream cells(fs::path(out_dir) / "ablation.csv");
    cells << csv;
    std::ofstream runs(fs::path(out_dir) / "ablation_runs.csv");
    runs << "temporal,strategy,seed,eval_loss,toy_fvd,smoothness\n";
    for (const AblationRun& r : result.runs)
        runs << r.temporal << ',' << r.strategy << ',' << r.seed << ',' << r.eval_loss << ','
             << r.fvd << ',' << r.smoothness << '\n';
    return 0;
}

int cmd_inspect(const std::string& config_path, long steps, const std::string& loss_trace,
                const std::string& out_path, std::optional<uint64_t> seed) {
    RunConfig cfg = load_run_config(config_path, seed);
    if (steps > 0) cfg.train_steps = steps;

    std::vector<double> losses;
    if (!loss_trace.empty()) {
        std::ifstream in(loss_trace);
        if (!in) throw std::runtime_error("cannot open loss trace " + loss_trace);
        double v;
        while (in >> v) losses.push_back(v);
    }

    Scheduler sched(cfg.strategy(), cfg.curriculum_config());
    Rng rng(mix64(cfg.seed ^ 0x696e7370ull));
    std::vector<TrainLogRow> rows;
    for (long step = 1; step <= cfg.train_steps; ++step) {
        const Scheduler::Draw d = sched.next(rng);
        const double loss =
            losses.empty() ? 0.0 : losses[size_t((step - 1) % long(losses.size()))];
        const auto [dev, pid] = sched.feedback(loss);
        TrainLogRow row;
        row.step = step;
        row.task = d.task;
        row.n = d.n;
        row.loss = loss;
        row.loss_dev = dev;
        row.pid_score = pid;
        row.h_static = d.h_static;
        row.h_adaptive = d.h_adaptive;
        row.h_raw = d.h_raw;
        row.h_realized = d.h_realized;
        rows.push_back(row);
    }
    const std::string csv = curriculum_trace_csv(rows);
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        std::ofstream out(out_path);
        out << csv;
        if (!out) throw std::runtime_error("cannot write " + out_path);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sprite-clip diffusion trainer"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, checkpoint, task, clip_id, caption, resume;
    std::string seeds = "1,2,3", loss_trace;
    long steps = 0;
    std::optional<uint64_t> seed;

    auto add_common = [&](CLI::App* cmd, bool with_out) {
        cmd->add_option("--config", config_path, "config file (key = value lines)")->required();
        cmd->add_option("--seed", seed, "override the config seed");
        if (with_out) cmd->add_option("--out", out_dir, "output directory")->required();
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a sprite dataset");
    add_common(gen, true);

    CLI::App* train = app.add_subcommand("train", "train a model");
    add_common(train, true);
    train->add_option("--data", data_dir, "dataset directory from gen-data")->required();
    train->add_option("--resume", resume, "state file to resume from");

    CLI::App* sample = app.add_subcommand("sample", "sample a clip from a checkpoint");
    add_common(sample, true);
    sample->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    sample->add_option("--task", task, "IPT, PDT or GRT")->required();
    sample->add_option("--data", data_dir, "dataset directory for guidance")->required();
    sample->add_option("--clip", clip_id, "guidance clip id from the eval split")->required();
    sample->add_option("--caption", caption, "caption words, e.g. 'red circle bounce'");

    CLI::App* evalc = app.add_subcommand("eval", "metric report for a checkpoint");
    evalc->add_option("--config", config_path, "config file")->required();
    evalc->add_option("--seed", seed, "override the config seed");
    evalc->add_option("--out", out_dir, "directory for report.csv");
    evalc->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    evalc->add_option("--data", data_dir, "dataset directory")->required();

    CLI::App* ablate = app.add_subcommand("ablate", "run the temporal-block x strategy grid");
    add_common(ablate, true);
    ablate->add_option("--seeds", seeds, "comma-separated training seeds");

    CLI::App* inspect = app.add_subcommand("inspect-curriculum", "dump a curriculum trace");
    inspect->add_option("--config", config_path, "config file")->required();
    inspect->add_option("--seed", seed, "override the config seed");
    inspect->add_option("--steps", steps, "trace length (default: train.steps)");
    inspect->add_option("--loss-trace", loss_trace, "file with one loss value per line");
    inspect->add_option("--out", out_dir, "output CSV path (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_dir, seed);
        if (train->parsed()) return cmd_train(config_path, data_dir, out_dir, seed, resume);
        if (sample->parsed())
            return cmd_sample(config_path, checkpoint, task, data_dir, clip_id, caption,
                              out_dir, seed);
        if (evalc->parsed()) return cmd_eval(config_path, checkpoint, data_dir, out_dir, seed);
        if (ablate->parsed()) return cmd_ablate(config_path, out_dir, seeds);
        if (inspect->parsed())
            return cmd_inspect(config_path, steps, loss_trace, out_dir, seed);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime failure: %s\n", e.what());
        return 2;
    }
    return 1;
}
