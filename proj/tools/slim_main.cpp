// slim: single entry point for dataset generation, pretraining, two-stage
// training, compression, and evaluation.
//
// Exit codes: 0 success, 2 usage/config error, 3 runtime failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "slim/core/image_io.hpp"
#include "slim/core/zlib_util.hpp"
#include "slim/data/caption.hpp"
#include "slim/eval/evaluate.hpp"
#include "slim/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace slim;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- flat key-value config file -------------------------------------------

const std::map<std::string, int>& allowed_config_keys() {
    static const std::map<std::string, int> keys = {
        {"seed", 0},           {"steps", 0},          {"batch_size", 0},      {"lr", 0},
        {"lambda_r", 0},       {"lambda_g", 0},       {"lambda_d", 0},        {"lambda_roi", 0},
        {"lambda_t", 0},       {"enhance_strength", 0}, {"enhance_steps", 0}, {"use_roi_mask", 0},
        {"detach_control", 0}, {"checkpoint_every", 0}, {"feature_channels", 0}, {"hyper_channels", 0},
        {"slices", 0},         {"context_mid", 0},    {"schedule_t", 0},      {"classes", 0},
    };
    return keys;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("config: cannot open " + path);
    std::map<std::string, std::string> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string key, value;
        const size_t eq = line.find('=');
        if (eq != std::string::npos) {
            key = line.substr(0, eq);
            value = line.substr(eq + 1);
        } else {
            std::istringstream ss(line);
            ss >> key >> value;
        }
        auto trim = [](std::string& s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            s = (a == std::string::npos) ? "" : s.substr(a, b - a + 1);
        };
        trim(key);
        trim(value);
        if (key.empty()) continue;
        if (!allowed_config_keys().count(key))
            throw UsageError("config: unknown key '" + key + "' at " + path + ":" + std::to_string(lineno));
        if (value.empty()) throw UsageError("config: key '" + key + "' has no value at " + path + ":" + std::to_string(lineno));
        out[key] = value;
    }
    return out;
}

// Applies a config-file value to a variable unless the flag was given (flags win).
template <typename T>
void apply_config(const std::map<std::string, std::string>& cfg, const std::string& key, const CLI::Option* opt, T& var) {
    auto it = cfg.find(key);
    if (it == cfg.end() || (opt && opt->count() > 0)) return;
    std::istringstream ss(it->second);
    ss >> var;
    if (ss.fail()) throw UsageError("config: cannot parse value '" + it->second + "' for key '" + key + "'");
}

uint64_t resolve_seed(const CLI::Option* seed_opt, uint64_t flag_value, const std::map<std::string, std::string>& cfg) {
    if (seed_opt && seed_opt->count() > 0) return flag_value;
    auto it = cfg.find("seed");
    if (it != cfg.end()) return std::stoull(it->second);
    if (const char* env = std::getenv("SLIM_SEED")) return std::stoull(env);
    throw UsageError("seed required: pass --seed, set it in the config file, or export SLIM_SEED");
}

// ---- shared model loading --------------------------------------------------

struct Pretrained {
    Autoencoder vae;
    TaskClassifier clf;
    Denoiser den;
};

Pretrained load_pretrained(const std::string& vae_path, const std::string& clf_path, const std::string& den_path) {
    Pretrained p;
    p.vae = Autoencoder::load_file(vae_path);
    p.clf = TaskClassifier::load_file(clf_path);
    p.den = Denoiser::load_file(den_path);
    p.vae.freeze();
    p.clf.freeze();
    p.den.freeze_base();
    return p;
}

std::vector<LabeledImage> load_images(const std::string& root, int classes) {
    const std::string manifest = (fs::path(root) / "manifest.csv").string();
    if (!fs::exists(manifest)) throw UsageError("--data: no manifest.csv under " + root);
    return load_dataset(root, manifest, classes);
}

Caption caption_for(const LabeledImage& img, const TaskClassifier& clf) {
    // encoder-side caption: saliency + class name of the classifier's choice
    LabeledImage tagged = img;
    tagged.label = clf.predict(img.pixels.reshaped({1, 3, img.height(), img.width()}))[0];
    return make_roi_caption(tagged, gradcam_mask(tagged, clf, true), default_class_names());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"slim: RoI-focused latent compression with diffusion enhancement"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    std::string config_path;
    app.add_option("--config", config_path, "flat key-value config file; flags override it")->expected(1);

    uint64_t seed = 0;
    CLI::Option* seed_opt = app.add_option("--seed", seed, "RNG seed (fallback: config file, then $SLIM_SEED)");

    // ---- gen-data ----
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic labeled dataset");
    std::string gen_out;
    int gen_n = 64, gen_classes = 10, gen_size = 64;
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--n", gen_n, "number of images");
    gen->add_option("--classes", gen_classes, "number of classes");
    gen->add_option("--size", gen_size, "square image size");

    // ---- pretrain ----
    auto* pre = app.add_subcommand("pretrain", "train and freeze the autoencoder, classifier, and base denoiser");
    std::string pre_data, pre_out;
    int pre_classes = 10, vae_steps = 3000, clf_steps = 1500, den_steps = 1200;
    pre->add_option("--data", pre_data, "dataset directory (images + manifest.csv)")->required();
    pre->add_option("--out", pre_out, "output directory for the three checkpoints")->required();
    CLI::Option* pre_classes_opt = pre->add_option("--classes", pre_classes, "number of classes");
    pre->add_option("--vae-steps", vae_steps, "autoencoder training steps");
    pre->add_option("--clf-steps", clf_steps, "classifier training steps");
    pre->add_option("--den-steps", den_steps, "denoiser training steps");

    // ---- train-stage1 / train-stage2 ----
    StageConfig scfg;
    std::string tr_data, tr_out, tr_vae, tr_clf, tr_den, tr_stage1, tr_resume;
    int tr_classes = 10, schedule_t = 200;
    CodecConfig ccfg;
    auto add_train_opts = [&](CLI::App* cmd, std::map<std::string, CLI::Option*>& opts) {
        cmd->add_option("--data", tr_data, "dataset directory")->required();
        cmd->add_option("--out", tr_out, "output directory for checkpoints and the loss log")->required();
        cmd->add_option("--vae", tr_vae, "autoencoder checkpoint")->required();
        cmd->add_option("--clf", tr_clf, "classifier checkpoint")->required();
        opts["classes"] = cmd->add_option("--classes", tr_classes, "number of classes");
        opts["steps"] = cmd->add_option("--steps", scfg.steps, "training steps");
        opts["batch_size"] = cmd->add_option("--batch-size", scfg.batch_size, "batch size");
        opts["lr"] = cmd->add_option("--lr", scfg.lr, "learning rate");
        opts["lambda_r"] = cmd->add_option("--lambda-r", scfg.lambda_r, "rate weight");
        opts["lambda_g"] = cmd->add_option("--lambda-g", scfg.lambda_g, "guide weight");
        opts["lambda_d"] = cmd->add_option("--lambda-d", scfg.lambda_d, "denoise weight");
        opts["lambda_roi"] = cmd->add_option("--lambda-roi", scfg.lambda_roi, "reconstruction weight");
        opts["lambda_t"] = cmd->add_option("--lambda-t", scfg.lambda_t, "task weight");
        opts["enhance_strength"] = cmd->add_option("--strength", scfg.enhance_strength, "enhancement noise strength");
        opts["enhance_steps"] = cmd->add_option("--enhance-steps", scfg.enhance_steps, "enhancement sampling steps");
        opts["use_roi_mask"] = cmd->add_option("--use-roi-mask", scfg.use_roi_mask, "0: train with mask identically 1");
        opts["detach_control"] = cmd->add_option("--detach-control", scfg.detach_control, "detach control input");
        opts["checkpoint_every"] = cmd->add_option("--checkpoint-every", scfg.checkpoint_every, "checkpoint period");
        opts["feature_channels"] = cmd->add_option("--feature-channels", ccfg.feature_channels, "codec feature channels");
        opts["hyper_channels"] = cmd->add_option("--hyper-channels", ccfg.hyper_channels, "codec hyper channels");
        opts["slices"] = cmd->add_option("--slices", ccfg.slices, "codec channel slices");
        opts["context_mid"] = cmd->add_option("--context-mid", ccfg.context_mid, "context net width");
        opts["schedule_t"] = cmd->add_option("--schedule-t", schedule_t, "diffusion schedule length");
        cmd->add_option("--resume", tr_resume, "stage checkpoint to continue from");
    };
    std::map<std::string, CLI::Option*> s1_opts, s2_opts;
    auto* s1 = app.add_subcommand("train-stage1", "joint codec + control training, rate/guide/denoise objective");
    s1->add_option("--den", tr_den, "pretrained denoiser checkpoint")->required();
    add_train_opts(s1, s1_opts);
    auto* s2 = app.add_subcommand("train-stage2", "adds the reconstruction and task terms through enhancement");
    add_train_opts(s2, s2_opts);
    s2->add_option("--stage1-ckpt", tr_stage1, "stage-1 checkpoint to start from");

    // ---- compress / decompress ----
    auto* comp = app.add_subcommand("compress", "image -> bitstream file");
    std::string c_image, c_ckpt, c_vae, c_clf, c_out;
    bool c_no_caption = false;
    comp->add_option("--image", c_image, "input PNG")->required();
    comp->add_option("--ckpt", c_ckpt, "stage checkpoint")->required();
    comp->add_option("--vae", c_vae, "autoencoder checkpoint")->required();
    comp->add_option("--clf", c_clf, "classifier checkpoint (for the RoI caption)");
    comp->add_option("--out", c_out, "output bitstream path")->required();
    comp->add_flag("--no-caption", c_no_caption, "omit the caption side channel");

    auto* deco = app.add_subcommand("decompress", "bitstream file -> image");
    std::string d_in, d_ckpt, d_vae, d_out;
    bool d_no_enhance = false;
    int d_steps = 10;
    double d_strength = 0.3;
    deco->add_option("--in", d_in, "input bitstream")->required();
    deco->add_option("--ckpt", d_ckpt, "stage checkpoint")->required();
    deco->add_option("--vae", d_vae, "autoencoder checkpoint")->required();
    deco->add_option("--out", d_out, "output PNG path")->required();
    deco->add_flag("--no-enhance", d_no_enhance, "skip diffusion enhancement");
    deco->add_option("--enhance-steps", d_steps, "enhancement sampling steps");
    deco->add_option("--strength", d_strength, "enhancement noise strength");
    int d_schedule_t = 200;
    deco->add_option("--schedule-t", d_schedule_t, "diffusion schedule length");

    // ---- evaluate ----
    auto* ev = app.add_subcommand("evaluate", "rate-accuracy report over a labeled set");
    std::string e_data, e_ckpt, e_vae, e_clf, e_out;
    int e_classes = 10, e_steps = 10, e_schedule_t = 200;
    double e_strength = 0.3, e_lambda_r = 1.0;
    bool e_no_enhance = false, e_no_caption = false, e_no_timing = false, e_append = false;
    std::string e_variant = "slim";
    ev->add_option("--data", e_data, "dataset directory")->required();
    ev->add_option("--ckpt", e_ckpt, "stage checkpoint")->required();
    ev->add_option("--vae", e_vae, "autoencoder checkpoint")->required();
    ev->add_option("--clf", e_clf, "classifier checkpoint")->required();
    ev->add_option("--out", e_out, "output CSV path")->required();
    CLI::Option* e_classes_opt = ev->add_option("--classes", e_classes, "number of classes");
    ev->add_option("--variant", e_variant, "variant label for the report");
    ev->add_option("--lambda-r", e_lambda_r, "rate weight recorded in the report");
    ev->add_option("--enhance-steps", e_steps, "enhancement sampling steps");
    ev->add_option("--strength", e_strength, "enhancement noise strength");
    ev->add_option("--schedule-t", e_schedule_t, "diffusion schedule length");
    ev->add_flag("--no-enhance", e_no_enhance, "skip diffusion enhancement");
    ev->add_flag("--no-caption", e_no_caption, "omit the caption side channel");
    ev->add_flag("--no-timing", e_no_timing, "zero the timing columns (byte-reproducible output)");
    ev->add_flag("--append", e_append, "append the row to an existing CSV");

    // ---- bdrate ----
    auto* bd = app.add_subcommand("bdrate", "BD-rate of a test report CSV against a reference CSV");
    std::string b_ref, b_test;
    bool b_pchip = false;
    bd->add_option("--ref", b_ref, "reference report CSV")->required();
    bd->add_option("--test", b_test, "test report CSV")->required();
    bd->add_flag("--pchip", b_pchip, "monotone piecewise-cubic fit instead of a single cubic");

    // ---- bitmap ----
    auto* bm = app.add_subcommand("bitmap", "export the estimated-bits allocation map of one image");
    std::string m_image, m_ckpt, m_vae, m_png, m_raw;
    bm->add_option("--image", m_image, "input PNG")->required();
    bm->add_option("--ckpt", m_ckpt, "stage checkpoint")->required();
    bm->add_option("--vae", m_vae, "autoencoder checkpoint")->required();
    bm->add_option("--png", m_png, "grayscale map output path")->required();
    bm->add_option("--raw", m_raw, "raw float64 map output path")->required();

    // let --seed/--config appear after the subcommand name
    for (CLI::App* sub : {gen, pre, s1, s2, comp, deco, ev, bd, bm}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        std::map<std::string, std::string> cfg;
        if (!config_path.empty()) cfg = read_config_file(config_path);

        if (*gen) {
            const uint64_t s = resolve_seed(seed_opt, seed, cfg);
            SyntheticDataset data = generate_synthetic_dataset(gen_n, gen_classes, gen_size, s);
            save_dataset(data.images, gen_out);
            std::cout << "wrote " << data.images.size() << " images (" << gen_classes << " classes, " << gen_size
                      << "x" << gen_size << ") to " << gen_out << "\n";
            return 0;
        }

        if (*pre) {
            const uint64_t s = resolve_seed(seed_opt, seed, cfg);
            apply_config(cfg, "classes", pre_classes_opt, pre_classes);
            if (!fs::exists(pre_data)) throw UsageError("--data: no such directory " + pre_data);
            std::vector<LabeledImage> images = load_images(pre_data, pre_classes);
            if (images.size() < 2) throw UsageError("--data: need at least 2 images, got " + std::to_string(images.size()));
            fs::create_directories(pre_out);
            const size_t split = images.size() - std::max<size_t>(1, images.size() / 5);
            std::vector<LabeledImage> train(images.begin(), images.begin() + static_cast<long>(split));
            std::vector<LabeledImage> val(images.begin() + static_cast<long>(split), images.end());

            AutoencoderTrainConfig vcfg;
            vcfg.steps = vae_steps;
            vcfg.seed = s;
            Autoencoder vae = pretrain_autoencoder(train, vcfg);
            vae.save((fs::path(pre_out) / "vae.ckpt").string());

            ClassifierTrainConfig ccfg2;
            ccfg2.steps = clf_steps;
            ccfg2.seed = s + 1;
            TaskClassifier clf = train_classifier(train, val, pre_classes, ccfg2);
            clf.save((fs::path(pre_out) / "clf.ckpt").string());

            std::vector<Tensor> latents;
            std::vector<std::vector<int>> captions;
            for (const auto& img : train) {
                latents.push_back(vae.encode(img.pixels.reshaped({1, 3, img.height(), img.width()})));
                captions.push_back(make_roi_caption(img, gradcam_mask(img, clf, true), default_class_names()).token_ids);
            }
            DenoiserConfig dcfg;
            dcfg.text_vocab = caption_vocab_size();
            DenoiserTrainConfig dtc;
            dtc.steps = den_steps;
            dtc.seed = s + 2;
            NoiseSchedule sched = NoiseSchedule::linear(200, 1e-4, 0.02);
            Denoiser den = pretrain_denoiser(latents, captions, sched, dcfg, dtc);
            den.save((fs::path(pre_out) / "denoiser.ckpt").string());
            std::cout << "wrote vae.ckpt, clf.ckpt, denoiser.ckpt to " << pre_out << "\n";
            return 0;
        }

        if (*s1 || *s2) {
            const int stage = *s1 ? 1 : 2;
            auto& opts = *s1 ? s1_opts : s2_opts;
            scfg.seed = resolve_seed(seed_opt, seed, cfg);
            apply_config(cfg, "classes", opts["classes"], tr_classes);
            apply_config(cfg, "steps", opts["steps"], scfg.steps);
            apply_config(cfg, "batch_size", opts["batch_size"], scfg.batch_size);
            apply_config(cfg, "lr", opts["lr"], scfg.lr);
            apply_config(cfg, "lambda_r", opts["lambda_r"], scfg.lambda_r);
            apply_config(cfg, "lambda_g", opts["lambda_g"], scfg.lambda_g);
            apply_config(cfg, "lambda_d", opts["lambda_d"], scfg.lambda_d);
            apply_config(cfg, "lambda_roi", opts["lambda_roi"], scfg.lambda_roi);
            apply_config(cfg, "lambda_t", opts["lambda_t"], scfg.lambda_t);
            apply_config(cfg, "enhance_strength", opts["enhance_strength"], scfg.enhance_strength);
            apply_config(cfg, "enhance_steps", opts["enhance_steps"], scfg.enhance_steps);
            apply_config(cfg, "use_roi_mask", opts["use_roi_mask"], scfg.use_roi_mask);
            apply_config(cfg, "detach_control", opts["detach_control"], scfg.detach_control);
            apply_config(cfg, "checkpoint_every", opts["checkpoint_every"], scfg.checkpoint_every);
            apply_config(cfg, "feature_channels", opts["feature_channels"], ccfg.feature_channels);
            apply_config(cfg, "hyper_channels", opts["hyper_channels"], ccfg.hyper_channels);
            apply_config(cfg, "slices", opts["slices"], ccfg.slices);
            apply_config(cfg, "context_mid", opts["context_mid"], ccfg.context_mid);
            apply_config(cfg, "schedule_t", opts["schedule_t"], schedule_t);
            if (scfg.lambda_r < 0 || scfg.lambda_g < 0 || scfg.lambda_d < 0 || scfg.lambda_roi < 0 || scfg.lambda_t < 0)
                throw UsageError("loss weights must be >= 0");
            if (stage == 2 && tr_stage1.empty() && tr_resume.empty())
                throw UsageError("train-stage2 requires --stage1-ckpt (or --resume)");

            Autoencoder vae = Autoencoder::load_file(tr_vae);
            TaskClassifier clf = TaskClassifier::load_file(tr_clf);
            vae.freeze();
            clf.freeze();

            EntropyCodec codec;
            Denoiser den;
            int start_step = 0;
            if (!tr_resume.empty()) {
                StageCheckpoint sc = load_stage_checkpoint(tr_resume);
                if (sc.stage != stage)
                    throw UsageError("--resume: checkpoint is stage " + std::to_string(sc.stage) + ", expected " +
                                     std::to_string(stage));
                codec = sc.codec;
                den = sc.denoiser;
                start_step = sc.step;
            } else if (stage == 2) {
                StageCheckpoint sc = load_stage_checkpoint(tr_stage1);
                if (sc.stage != 1) throw UsageError("--stage1-ckpt: checkpoint is not a stage-1 checkpoint");
                codec = sc.codec;
                den = sc.denoiser;
            } else {
                codec = EntropyCodec(ccfg, scfg.seed + 101);
                den = Denoiser::load_file(tr_den);
                den.freeze_base();
            }

            std::vector<LabeledImage> images = load_images(tr_data, tr_classes);
            std::vector<TrainItem> items = prepare_items(images, vae, clf, den);
            NoiseSchedule sched = NoiseSchedule::linear(schedule_t, 1e-4, 0.02);
            Trainer trainer(codec, den, vae, clf, sched, scfg);
            std::string final_ckpt = trainer.run(stage, items, tr_out, start_step);
            std::cout << "final checkpoint: " << final_ckpt << "\n";
            return 0;
        }

        if (*comp) {
            if (!c_no_caption && c_clf.empty()) throw UsageError("compress: --clf required unless --no-caption is set");
            StageCheckpoint sc = load_stage_checkpoint(c_ckpt);
            Autoencoder vae = Autoencoder::load_file(c_vae);
            Tensor pixels = read_png_rgb(c_image);
            const int H = pixels.dim(1), W = pixels.dim(2);
            Tensor latent = vae.encode(pixels.reshaped({1, 3, H, W}));
            std::optional<Caption> caption;
            if (!c_no_caption) {
                TaskClassifier clf = TaskClassifier::load_file(c_clf);
                LabeledImage img;
                img.pixels = pixels;
                img.id = c_image;
                caption = caption_for(img, clf);
            }
            Bitstream bs = sc.codec.compress(latent, H, W, caption);
            bs.write_file(c_out);
            const double bits = static_cast<double>(fs::file_size(c_out)) * 8.0;
            std::printf("bpp %.10g (%d x %d, %d bytes)\n", bits / (H * W), H, W, static_cast<int>(fs::file_size(c_out)));
            return 0;
        }

        if (*deco) {
            StageCheckpoint sc = load_stage_checkpoint(d_ckpt);
            Autoencoder vae = Autoencoder::load_file(d_vae);
            Bitstream bs = Bitstream::read_file(d_in);
            Tensor z_hat = sc.codec.decompress(bs);
            if (!d_no_enhance) {
                std::vector<int> tokens;
                if (bs.flags & Bitstream::kFlagCaption) tokens = tokenize_caption(inflate_bytes(bs.caption_payload));
                const uint64_t s = seed_opt->count() || cfg.count("seed") || std::getenv("SLIM_SEED")
                                       ? resolve_seed(seed_opt, seed, cfg)
                                       : 0;
                Rng rng(s);
                NoiseSchedule sched = NoiseSchedule::linear(d_schedule_t, 1e-4, 0.02);
                z_hat = sc.denoiser.enhance(z_hat, sc.denoiser.embed_caption(tokens), sched, d_steps, d_strength, rng);
            }
            Tensor image = vae.decode(z_hat);
            write_png_rgb(d_out, image.reshaped({3, image.dim(2), image.dim(3)}));
            std::cout << "wrote " << d_out << " (" << image.dim(2) << " x " << image.dim(3) << ")\n";
            return 0;
        }

        if (*ev) {
            apply_config(cfg, "classes", e_classes_opt, e_classes);
            EvalConfig ecfg;
            ecfg.enhance = !e_no_enhance;
            ecfg.enhance_steps = e_steps;
            ecfg.enhance_strength = e_strength;
            ecfg.send_caption = !e_no_caption;
            ecfg.seed = resolve_seed(seed_opt, seed, cfg);
            ecfg.variant = e_variant;
            ecfg.lambda_r = e_lambda_r;
            StageCheckpoint sc = load_stage_checkpoint(e_ckpt);
            Autoencoder vae = Autoencoder::load_file(e_vae);
            TaskClassifier clf = TaskClassifier::load_file(e_clf);
            std::vector<LabeledImage> images = load_images(e_data, e_classes);
            NoiseSchedule sched = NoiseSchedule::linear(e_schedule_t, 1e-4, 0.02);
            EvalReport r = evaluate_model(sc.codec, sc.denoiser, vae, clf, sched, images, ecfg);
            std::vector<EvalReport> rows;
            if (e_append && fs::exists(e_out)) {
                // keep prior rows so sweeps accumulate into one CSV
                std::ifstream in(e_out);
                std::string line;
                std::getline(in, line);  // header
                while (std::getline(in, line)) {
                    EvalReport prev;
                    char variant[128] = {0};
                    if (std::sscanf(line.c_str(), "%127[^,],%lf,%lf,%lf,%lf,%lf", variant, &prev.lambda_r, &prev.bpp,
                                    &prev.top1, &prev.encode_ms, &prev.decode_ms) == 6) {
                        prev.variant = variant;
                        rows.push_back(prev);
                    }
                }
            }
            rows.push_back(r);
            write_report_csv(e_out, rows, !e_no_timing);
            std::cout << format_report_table(rows);
            return 0;
        }

        if (*bd) {
            auto read_curve = [](const std::string& path) {
                std::ifstream in(path);
                if (!in) throw UsageError("bdrate: cannot open " + path);
                RateAccuracyCurve c;
                c.label = path;
                std::string line;
                std::getline(in, line);  // header
                while (std::getline(in, line)) {
                    char variant[128] = {0};
                    double lr2, bpp, top1, em, dm;
                    if (std::sscanf(line.c_str(), "%127[^,],%lf,%lf,%lf,%lf,%lf", variant, &lr2, &bpp, &top1, &em,
                                    &dm) == 6)
                        c.points.push_back({bpp, top1});
                }
                return c;
            };
            const double v = bd_rate(read_curve(b_ref), read_curve(b_test), b_pchip);
            std::printf("BD-rate: %.2f%%\n", v);
            return 0;
        }

        if (*bm) {
            StageCheckpoint sc = load_stage_checkpoint(m_ckpt);
            Autoencoder vae = Autoencoder::load_file(m_vae);
            LabeledImage img;
            img.pixels = read_png_rgb(m_image);
            img.id = m_image;
            BitAllocationMap map = export_bitmap(sc.codec, vae, img, m_png, m_raw);
            std::printf("feature bits %.10g, hyper bits %.10g\n", map.feature_bits, map.hyper_bits);
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
