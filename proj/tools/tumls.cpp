#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include <opencv2/imgcodecs.hpp>

#include "tumls/error.hpp"
#include "tumls/parallel.hpp"
#include "tumls/pipeline.hpp"
#include "tumls/synthetic.hpp"

namespace fs = std::filesystem;
using namespace tumls;

namespace {

std::string config_path;

pipeline::PipelineConfig config() {
    if (config_path.empty()) return {};
    return pipeline::load_config(config_path);
}

std::vector<pyramid::Patch> patches_from(const fs::path& dir) {
    // Accept either a patch set or a filter output directory.
    if (!fs::exists(dir / "manifest.json") && fs::exists(dir / "kept" / "manifest.json"))
        return pyramid::load_patchset(dir / "kept");
    return pyramid::load_patchset(dir);
}

cv::Mat read_mask(const fs::path& p) {
    cv::Mat m = cv::imread(p.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw DataError("cannot read mask " + p.string());
    return m;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-level unsupervised tissue and nucleus analysis for slide pyramids"};
    app.require_subcommand(1);
    app.fallthrough();
    unsigned threads = 0;
    app.add_option("--config", config_path, "pipeline JSON config")->check(CLI::ExistingFile);
    app.add_option("--threads", threads, "worker thread cap (default: TUMLS_THREADS or all cores)");

    // pyramid
    auto* pyr_cmd = app.add_subcommand("pyramid", "build a pyramid from config input and extract low-level patches");
    std::string pyr_in, pyr_out;
    pyr_cmd->add_option("--in", pyr_in, "input RGB image (overrides input.image)");
    pyr_cmd->add_option("--out", pyr_out, "output directory")->required();

    // filter
    auto* filter_cmd = app.add_subcommand("filter", "drop background patches");
    std::string filter_in, filter_out;
    filter_cmd->add_option("--patches", filter_in, "patch set directory")->required();
    filter_cmd->add_option("--out", filter_out, "output directory")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train the autoencoder");
    std::string train_in, train_out;
    train_cmd->add_option("--patches", train_in, "patch set directory")->required();
    train_cmd->add_option("--out", train_out, "checkpoint file")->required();

    // embed
    auto* embed_cmd = app.add_subcommand("embed", "encode patches into latent vectors");
    std::string embed_model, embed_in, embed_out;
    embed_cmd->add_option("--model", embed_model, "checkpoint file")->required();
    embed_cmd->add_option("--patches", embed_in, "patch set directory")->required();
    embed_cmd->add_option("--out", embed_out, "latents JSON file")->required();

    // cluster
    auto* cluster_cmd = app.add_subcommand("cluster", "choose k, run k-means and pick representatives");
    std::string cluster_in, cluster_out;
    std::optional<std::uint64_t> cluster_seed;
    cluster_cmd->add_option("--latents", cluster_in, "latents JSON file")->required();
    cluster_cmd->add_option("--seed", cluster_seed, "clustering seed");
    cluster_cmd->add_option("--out", cluster_out, "cluster JSON file")->required();

    // segment
    auto* seg_cmd = app.add_subcommand("segment", "segment nuclei in one patch");
    std::string seg_in, seg_out;
    bool seg_steps = false;
    seg_cmd->add_option("--in", seg_in, "RGB patch")->required();
    seg_cmd->add_option("--out-dir", seg_out, "output directory")->required();
    seg_cmd->add_flag("--save-steps", seg_steps, "also write intermediate images");

    // stain
    auto* stain_cmd = app.add_subcommand("stain", "Macenko-normalize one patch");
    std::string stain_in, stain_out, stain_hema;
    stain_cmd->add_option("--in", stain_in, "RGB patch")->required();
    stain_cmd->add_option("--out", stain_out, "normalized PNG")->required();
    stain_cmd->add_option("--hema", stain_hema, "hematoxylin channel PNG");

    // features
    auto* feat_cmd = app.add_subcommand("features", "compute the feature table for segmented patches");
    std::string feat_patches, feat_masks, feat_out;
    int feat_variant = 0;
    feat_cmd->add_option("--patches", feat_patches, "patch set directory")->required();
    feat_cmd->add_option("--masks", feat_masks, "directory with one <patch-stem>/mask_<v>.png per patch")->required();
    feat_cmd->add_option("--variant", feat_variant, "mask variant (default: features.mask_variant)");
    feat_cmd->add_option("--out", feat_out, "CSV file")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score all mask variants against annotated ground truth");
    std::string eval_in, eval_out;
    eval_cmd->add_option("--dataset", eval_in, "dataset directory")->required();
    eval_cmd->add_option("--out", eval_out, "output directory")->required();

    // report
    auto* report_cmd = app.add_subcommand("report", "render the report from a bundle");
    std::string report_bundle, report_root, report_out;
    report_cmd->add_option("--bundle", report_bundle, "bundle.json")->required();
    report_cmd->add_option("--root", report_root, "run directory the bundle paths are relative to")->required();
    report_cmd->add_option("--out", report_out, "output directory")->required();

    // run
    auto* run_cmd = app.add_subcommand("run", "run every stage from the config");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "write the synthetic demo slide, dataset and config");
    std::string synth_out;
    int synth_size = 2048;
    std::uint64_t synth_seed = 42;
    synth_cmd->add_option("--out", synth_out, "output directory")->required();
    synth_cmd->add_option("--size", synth_size, "slide edge length in pixels")->check(CLI::Range(256, 16384));
    synth_cmd->add_option("--seed", synth_seed, "random seed");

    CLI11_PARSE(app, argc, argv);

    if (threads == 0)
        if (const char* env = std::getenv("TUMLS_THREADS")) threads = static_cast<unsigned>(std::strtoul(env, nullptr, 10));
    set_thread_count(threads);

    try {
        if (pyr_cmd->parsed()) {
            auto c = config();
            if (!pyr_in.empty()) {
                c.image = fs::absolute(pyr_in).string();
                c.pyramid_dir.clear();
            }
            const auto pyr = pipeline::stage_pyramid(c, fs::path(pyr_out) / "pyramid");
            const auto patches = pipeline::stage_extract(c, pyr, fs::path(pyr_out) / "patches");
            std::cerr << patches.size() << " patches at level " << c.pyramid.low_level() << '\n';
        } else if (filter_cmd->parsed()) {
            const auto kept = pipeline::stage_filter(config(), patches_from(filter_in), filter_out);
            std::cerr << kept.size() << " tissue patches kept\n";
        } else if (train_cmd->parsed()) {
            pipeline::stage_train(config(), patches_from(train_in), train_out);
        } else if (embed_cmd->parsed()) {
            pipeline::stage_embed(ae::load_checkpoint(embed_model), patches_from(embed_in), embed_out);
        } else if (cluster_cmd->parsed()) {
            auto c = config();
            if (cluster_seed) c.cluster.seed = *cluster_seed;
            pipeline::stage_cluster(c, pipeline::load_latents(cluster_in), cluster_out);
        } else if (seg_cmd->parsed()) {
            const cv::Mat rgb = pyramid::read_rgb(seg_in);
            const auto r = nucleus::segment(rgb, config().segment);
            nucleus::save_segmentation(seg_out, rgb, r, seg_steps);
        } else if (stain_cmd->parsed()) {
            const auto r = stain::process(pyramid::read_rgb(stain_in), config().segment.stain);
            if (r.fallback) std::cerr << "warning: " << r.warning << '\n';
            pyramid::write_rgb(stain_out, r.normalized);
            if (!stain_hema.empty()) pyramid::write_rgb(stain_hema, r.hematoxylin);
        } else if (feat_cmd->parsed()) {
            const auto c = config();
            const int variant = feat_variant ? feat_variant : c.feature_mask_variant;
            if (variant < 1 || variant > 3) throw ConfigError("--variant must be 1, 2 or 3");
            std::vector<features::FeatureVector> rows;
            for (const auto& p : patches_from(feat_patches)) {
                const std::string stem = fs::path(pyramid::patch_file_name(p.address)).stem().string();
                const auto mask = nucleus::make_mask(
                    read_mask(fs::path(feat_masks) / stem / ("mask_" + std::to_string(variant) + ".png")), variant);
                const auto clean = nucleus::denoise(p.pixels, c.segment.denoise).clean;
                const auto st = stain::process(clean, c.segment.stain);
                auto f = features::extract_all(p.pixels, mask, st.concentrations);
                f.address = p.address;
                rows.push_back(f);
            }
            features::write_csv(feat_out, rows);
        } else if (eval_cmd->parsed()) {
            const auto r = metrics::evaluate(eval_in, config().segment);
            for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
            metrics::write_eval(eval_out, r);
            std::cerr << "best variant " << r.best_variant() << '\n';
        } else if (report_cmd->parsed()) {
            const auto b = report::bundle_from_json(pipeline::read_json(report_bundle));
            report::build_report(b, report_root, report_out);
        } else if (run_cmd->parsed()) {
            if (config_path.empty()) throw ConfigError("run needs --config");
            std::cout << pipeline::run_full(config()).string() << '\n';
        } else if (synth_cmd->parsed()) {
            synthetic::write_demo(synth_out, synth_size, synth_seed);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
