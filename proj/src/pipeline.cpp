#include "tumls/pipeline.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>

#include "tumls/error.hpp"
#include "tumls/parallel.hpp"
#include "tumls/stain.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tumls::pipeline {

namespace {

void log(const std::string& msg) { std::cerr << "[tumls] " << msg << '\n'; }

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

// Re-raises an error with the stage name and its input prepended, keeping the kind.
template <class F>
auto run_stage(const std::string& name, const std::string& input, F&& fn) -> decltype(fn()) {
    log("stage " + name);
    try {
        return fn();
    } catch (const Error& e) {
        throw_error(e.kind(), "stage " + name + " (input " + input + "): " + e.what());
    } catch (const cv::Exception& e) {
        throw DataError("stage " + name + " (input " + input + "): " + e.what());
    } catch (const json::exception& e) {
        throw DataError("stage " + name + " (input " + input + "): " + e.what());
    }
}

}  // namespace

void validate_sizes(const PyramidSizes& s) {
    if (s.low <= 0 || s.high <= 0) throw ConfigError("pyramid.high and pyramid.low must be positive");
    if (s.steps < 0 || s.steps > 20) throw ConfigError("pyramid.steps must lie in [0, 20]");
    if (static_cast<long long>(s.low) << s.steps != s.high)
        throw ConfigError("pyramid sizes violate high = low * 2^steps: high=" + std::to_string(s.high) +
                          ", low=" + std::to_string(s.low) + ", steps=" + std::to_string(s.steps));
}

fs::path PipelineConfig::resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

void PipelineConfig::validate() const {
    validate_sizes(pyramid);
    if (pyramid.low % 8 != 0)
        throw ConfigError("pyramid.low must be divisible by 8 for the three-stage encoder");
    if (!image.empty() && !pyramid_dir.empty())
        throw ConfigError("input.image and input.pyramid are mutually exclusive");
    filter.validate();
    train.validate();
    if (cluster.k_max < 2) throw ConfigError("cluster.k_max must be >= 2");
    if (cluster.n_representatives < 1) throw ConfigError("cluster.n_representatives must be >= 1");
    if (cluster.max_points < 2) throw ConfigError("cluster.max_points must be >= 2");
    if (cluster.max_iter < 1 || !(cluster.tol >= 0.0)) throw ConfigError("cluster.max_iter/tol out of range");
    if (feature_mask_variant < 1 || feature_mask_variant > 3)
        throw ConfigError("features.mask_variant must be 1, 2 or 3");
    if (out.empty()) throw ConfigError("out must not be empty");
}

json to_json(const PipelineConfig& c) {
    json input = json::object();
    if (!c.image.empty()) input["image"] = c.image;
    if (!c.pyramid_dir.empty()) input["pyramid"] = c.pyramid_dir;
    input["source_id"] = c.source_id;
    json j = {{"seed", c.seed},
              {"input", input},
              {"out", c.out},
              {"pyramid", {{"high", c.pyramid.high}, {"low", c.pyramid.low}, {"steps", c.pyramid.steps}}},
              {"filter", background::to_json(c.filter)},
              {"train", ae::to_json(c.train)},
              {"cluster",
               {{"k_max", c.cluster.k_max},
                {"n_representatives", c.cluster.n_representatives},
                {"seed", c.cluster.seed},
                {"max_points", c.cluster.max_points},
                {"max_iter", c.cluster.max_iter},
                {"tol", c.cluster.tol}}},
              {"stain", stain::to_json(c.segment.stain)},
              {"segment", nucleus::to_json(c.segment)},
              {"features", {{"mask_variant", c.feature_mask_variant}}}};
    j["eval"] = c.eval_dataset.empty() ? json::object() : json{{"dataset", c.eval_dataset}};
    return j;
}

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> known{"seed",   "input",   "out",     "pyramid",  "filter", "train",
                                             "cluster", "stain", "segment", "features", "eval"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("unknown config section '" + key + "'");

    PipelineConfig c;
    c.base_dir = base_dir;
    try {
        c.seed = j.value("seed", c.seed);
        c.train.rng_seed = c.seed;
        c.cluster.seed = c.seed;
        if (j.contains("input")) {
            const auto& in = j["input"];
            c.image = in.value("image", std::string{});
            c.pyramid_dir = in.value("pyramid", std::string{});
            c.source_id = in.value("source_id", std::string{});
        }
        c.out = j.value("out", c.out);
        if (j.contains("pyramid")) {
            const auto& p = j["pyramid"];
            c.pyramid.high = p.value("high", c.pyramid.high);
            c.pyramid.low = p.value("low", c.pyramid.low);
            c.pyramid.steps = p.value("steps", c.pyramid.steps);
        }
        if (j.contains("filter")) c.filter = background::filter_config_from_json(j["filter"]);
        if (j.contains("train")) {
            json t = j["train"];
            if (!t.contains("rng_seed")) t["rng_seed"] = c.seed;
            c.train = ae::train_config_from_json(t);
        }
        if (j.contains("cluster")) {
            const auto& k = j["cluster"];
            c.cluster.k_max = k.value("k_max", c.cluster.k_max);
            c.cluster.n_representatives = k.value("n_representatives", c.cluster.n_representatives);
            c.cluster.seed = k.value("seed", c.cluster.seed);
            c.cluster.max_points = k.value("max_points", c.cluster.max_points);
            c.cluster.max_iter = k.value("max_iter", c.cluster.max_iter);
            c.cluster.tol = k.value("tol", c.cluster.tol);
        }
        if (j.contains("segment")) c.segment = nucleus::segment_params_from_json(j["segment"]);
        if (j.contains("stain")) c.segment.stain = stain::stain_params_from_json(j["stain"]);
        if (j.contains("features")) c.feature_mask_variant = j["features"].value("mask_variant", 1);
        if (j.contains("eval")) c.eval_dataset = j["eval"].value("dataset", std::string{});
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    c.validate();
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j, fs::absolute(path).parent_path());
}

std::string config_hash(const PipelineConfig& c) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    json j = to_json(c);
    j.erase("out");
    for (unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return hex64(h);
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + " is not valid JSON: " + e.what());
    }
}

void save_latents(const fs::path& path, const LatentSet& s) {
    json entries = json::array();
    for (std::size_t i = 0; i < s.addresses.size(); ++i)
        entries.push_back({{"address", pyramid::to_json(s.addresses[i])}, {"latent", s.latents[i]}});
    const std::size_t dim = s.latents.empty() ? 0 : s.latents.front().size();
    write_json(path, {{"format", "tumls-latents"}, {"version", 1}, {"dim", dim}, {"entries", entries}});
}

LatentSet load_latents(const fs::path& path) {
    const json j = read_json(path);
    LatentSet s;
    try {
        const std::size_t dim = j.at("dim").get<std::size_t>();
        for (const auto& e : j.at("entries")) {
            s.addresses.push_back(pyramid::address_from_json(e.at("address")));
            s.latents.push_back(e.at("latent").get<std::vector<double>>());
            if (s.latents.back().size() != dim)
                throw DataError("latent " + std::to_string(s.latents.size() - 1) + " has the wrong dimension");
        }
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return s;
}

pyramid::ImagePyramid stage_pyramid(const PipelineConfig& c, const fs::path& out) {
    pyramid::ImagePyramid pyr;
    if (c.image.empty() && c.pyramid_dir.empty()) throw ConfigError("config sets neither input.image nor input.pyramid");
    if (!c.pyramid_dir.empty()) {
        pyr = pyramid::load_pyramid(c.resolve(c.pyramid_dir));
        if (pyr.num_levels() < c.pyramid.num_levels())
            throw DataError("pyramid has " + std::to_string(pyr.num_levels()) + " levels, config needs " +
                            std::to_string(c.pyramid.num_levels()));
    } else {
        const fs::path image = c.resolve(c.image);
        const std::string id = c.source_id.empty() ? image.stem().string() : c.source_id;
        pyr = pyramid::build_pyramid(pyramid::read_rgb(image), c.pyramid.num_levels(), id);
    }
    if (!out.empty()) pyramid::save_pyramid(out, pyr);
    return pyr;
}

std::vector<pyramid::Patch> stage_extract(const PipelineConfig& c, const pyramid::ImagePyramid& pyr,
                                          const fs::path& out) {
    auto patches = pyramid::extract_patches(pyr, c.pyramid.low_level(), c.pyramid.low, c.pyramid.low);
    if (!out.empty())
        pyramid::save_patchset(out, patches,
                               {{"level", c.pyramid.low_level()}, {"size", c.pyramid.low}, {"stride", c.pyramid.low}});
    return patches;
}

std::vector<pyramid::Patch> stage_filter(const PipelineConfig& c, const std::vector<pyramid::Patch>& patches,
                                         const fs::path& out) {
    auto r = background::filter_patchset(patches, c.filter);
    if (r.kept.empty()) throw DataError("every patch was filtered out as background");
    if (!out.empty()) {
        pyramid::save_patchset(out / "kept", r.kept, {{"filter", background::to_json(c.filter)}});
        write_json(out / "stats.json", r.stats);
    }
    return r.kept;
}

ae::AEModel stage_train(const PipelineConfig& c, const std::vector<pyramid::Patch>& patches,
                        const fs::path& checkpoint) {
    if (patches.size() < 3) throw DataError("at least 3 tissue patches are needed to train");
    std::vector<cv::Mat> pixels;
    for (const auto& p : patches) pixels.push_back(p.pixels);
    const auto split = ae::split_dataset(pixels.size(), c.train.rng_seed);
    auto gather = [&](const std::vector<std::size_t>& idx) {
        std::vector<cv::Mat> v;
        for (auto i : idx) v.push_back(pixels[i]);
        return ae::to_tensor(v);
    };
    ae::Architecture arch;
    arch.input_size = c.pyramid.low;
    const auto initial = ae::make_model(arch, c.train.rng_seed);
    auto result = ae::train(initial, gather(split.train), gather(split.valid), c.train);
    log("trained " + std::to_string(result.history.epochs.size()) + " epochs, best valid mse " +
        features::format_number(result.history.best_valid_mse));
    if (!checkpoint.empty()) {
        if (checkpoint.has_parent_path()) fs::create_directories(checkpoint.parent_path());
        ae::save_checkpoint(checkpoint, result.best_model);
        fs::path sidecar = checkpoint;
        sidecar += ".json";
        write_json(sidecar, {{"train_config", ae::to_json(c.train)},
                             {"history", ae::to_json(result.history)},
                             {"split", {{"train", split.train.size()}, {"valid", split.valid.size()},
                                        {"test", split.test.size()}}}});
    }
    return result.best_model;
}

LatentSet stage_embed(const ae::AEModel& model, const std::vector<pyramid::Patch>& patches, const fs::path& out) {
    LatentSet s;
    std::vector<cv::Mat> pixels;
    for (const auto& p : patches) {
        pixels.push_back(p.pixels);
        s.addresses.push_back(p.address);
    }
    s.latents = ae::embed(model, pixels);
    if (!out.empty()) save_latents(out, s);
    return s;
}

ClusterOutput stage_cluster(const PipelineConfig& c, const LatentSet& latents, const fs::path& out) {
    if (latents.latents.size() < 2) throw DataError("at least 2 latents are needed to cluster");
    const auto dendrogram = clustering::agglomerate(latents.latents, c.cluster.max_points, c.cluster.seed);
    const int k = clustering::optimal_k(dendrogram, c.cluster.k_max);
    log("optimal k = " + std::to_string(k));
    ClusterOutput r;
    r.model = clustering::kmeans(latents.latents, k, {c.cluster.seed, c.cluster.max_iter, c.cluster.tol});
    r.representatives = clustering::select_representatives(r.model, latents.addresses, c.cluster.n_representatives);
    if (!out.empty()) {
        json merges = json::array();
        for (const auto& m : dendrogram.merges) merges.push_back({m.a, m.b, m.distance, m.size});
        const fs::path dir = out.parent_path();
        write_json(dir / "dendrogram.json", {{"num_points", dendrogram.num_points},
                                              {"sample_indices", dendrogram.sample_indices},
                                              {"merges", merges},
                                              {"optimal_k", k}});
        write_json(out, clustering::to_json(r.model, latents.addresses));
        json reps = json::array();
        for (const auto& cluster : r.representatives)
            for (const auto& rep : cluster)
                reps.push_back({{"cluster", rep.cluster},
                                {"rank", rep.rank},
                                {"address", pyramid::to_json(rep.address)},
                                {"distance", rep.distance},
                                {"normalized_distance", rep.normalized_distance}});
        write_json(dir / "representatives.json", reps);
    }
    return r;
}

report::InsightBundle stage_segment_features(const PipelineConfig& c, const pyramid::ImagePyramid& pyr,
                                             const ClusterOutput& clusters, const fs::path& out) {
    report::InsightBundle b;
    b.source_id = pyr.source_id;
    b.mask_variant = c.feature_mask_variant;
    const auto fractions = clustering::tissue_distribution(clusters.model);

    struct Job {
        std::size_t cluster, rank;
        pyramid::PatchAddress high;
        std::string dir;
    };
    std::vector<Job> jobs;
    for (std::size_t ci = 0; ci < clusters.representatives.size(); ++ci) {
        report::ClusterInsight ins;
        ins.id = static_cast<int>(ci);
        ins.fraction = fractions[ci];
        for (int a : clusters.model.assignments) ins.members += a == ins.id;
        for (std::size_t ri = 0; ri < clusters.representatives[ci].size(); ++ri) {
            const auto& rep = clusters.representatives[ci][ri];
            report::RepresentativeEntry e;
            e.low = rep.address;
            e.high = pyramid::corresponding_region(pyr, rep.address, c.pyramid.high_level());
            e.rank = rep.rank;
            e.distance = rep.distance;
            e.normalized_distance = rep.normalized_distance;
            const std::string stem = fs::path(pyramid::patch_file_name(e.high)).stem().string();
            const std::string dir = "segment/" + stem;
            e.patch_file = dir + "/patch.png";
            for (int v = 0; v < 3; ++v) e.mask_files[v] = dir + "/mask_" + std::to_string(v + 1) + ".png";
            jobs.push_back({ci, ri, e.high, dir});
            ins.representatives.push_back(std::move(e));
        }
        b.clusters.push_back(std::move(ins));
    }

    std::vector<pyramid::Patch> high_patches;
    for (const auto& job : jobs) high_patches.push_back({pyramid::crop(pyr, job.high), job.high, pyr.source_id});
    pyramid::save_patchset(out / "segment" / "patches", high_patches, {{"level", c.pyramid.high_level()}});

    std::vector<features::FeatureVector> rows(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t i) {
        const auto& job = jobs[i];
        const cv::Mat& rgb = high_patches[i].pixels;
        nucleus::SegmentResult seg;
        try {
            seg = nucleus::segment(rgb, c.segment);
        } catch (const DataError& e) {
            throw DataError(pyramid::patch_file_name(job.high) + ": " + e.what());
        }
        const fs::path dir = out / job.dir;
        nucleus::save_segmentation(dir, rgb, seg, false);
        pyramid::write_rgb(dir / "patch.png", rgb);
        auto f = features::extract_all(rgb, seg.masks[c.feature_mask_variant - 1], seg.stain.concentrations);
        f.address = job.high;
        f.cluster = static_cast<int>(job.cluster);
        rows[i] = f;
    });
    for (std::size_t i = 0; i < jobs.size(); ++i)
        b.clusters[jobs[i].cluster].representatives[jobs[i].rank].features = rows[i];
    features::write_csv(out / "features.csv", rows);
    return b;
}

fs::path run_full(const PipelineConfig& c) {
    const fs::path out = c.resolve(c.out);
    fs::create_directories(out);
    write_json(out / "config.json", to_json(c));
    const std::string input = c.image.empty() ? c.pyramid_dir : c.image;

    const auto pyr = run_stage("pyramid", input, [&] { return stage_pyramid(c, out / "pyramid"); });
    const auto patches = run_stage("extract", "pyramid", [&] { return stage_extract(c, pyr, out / "patches"); });
    const auto kept = run_stage("filter", "patches", [&] { return stage_filter(c, patches, out / "filter"); });
    const auto model = run_stage("train", "filter/kept", [&] { return stage_train(c, kept, out / "model" / "ae.ckpt"); });
    const auto latents = run_stage("embed", "model/ae.ckpt", [&] { return stage_embed(model, kept, out / "latents.json"); });
    const auto clusters = run_stage("cluster", "latents.json", [&] { return stage_cluster(c, latents, out / "cluster" / "clusters.json"); });
    auto bundle = run_stage("segment", "cluster/representatives.json",
                            [&] { return stage_segment_features(c, pyr, clusters, out); });

    if (!c.eval_dataset.empty()) {
        run_stage("eval", c.eval_dataset, [&] {
            const auto result = metrics::evaluate(c.resolve(c.eval_dataset), c.segment);
            metrics::write_eval(out / "eval", result);
            return 0;
        });
    }

    bundle.config_hash = config_hash(c);
    bundle.seeds = {{"seed", c.seed}, {"train", c.train.rng_seed}, {"cluster", c.cluster.seed}};
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
        const std::time_t t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
        bundle.timestamp = buf;
    }
    run_stage("report", "features.csv", [&] {
        report::build_report(bundle, out, out / "report");
        return 0;
    });
    log("done: " + (out / "report").string());
    return out / "report";
}

}  // namespace tumls::pipeline
