// Lesion-level uncertainty aggregation, rescaling, eta filtering, and the
// ROC sweep table with its CSV/JSON forms.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lesionuq/aggregate.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

using namespace lesionuq;

namespace {

// One synthetic scan: a 4-voxel confident lesion A that is real, and a
// 3-voxel wobbly blob B that is not. Built from an actual 2-sample stack so
// the maps are the library's own.
struct TinyScene {
    Dims dims{12, 4, 1};
    std::vector<std::uint64_t> blob_a;  // truth + candidate
    std::vector<std::uint64_t> blob_b;  // candidate only
    LabelMask gt;
    SampleStack stack;
    UncertaintyMaps maps;
    VoxelGrid mean;

    static TinyScene make() {
        const Dims d{12, 4, 1};
        std::vector<std::uint64_t> a, b;
        for (std::uint32_t x = 0; x < 4; ++x) a.push_back(d.index(x, 1, 0));
        for (std::uint32_t x = 8; x < 11; ++x) b.push_back(d.index(x, 2, 0));

        const auto sample = [&](float pa, float pb) {
            std::vector<float> v(d.voxel_count(), 0.05f);
            for (const auto i : a) v[i] = pa;
            for (const auto i : b) v[i] = pb;
            return VoxelGrid(d, GridKind::probability, std::move(v));
        };
        std::vector<VoxelGrid> preds;
        preds.push_back(sample(0.8f, 0.7f));
        preds.push_back(sample(1.0f, 0.5f));
        SampleStack stack(std::move(preds));

        LabelMask gt(d);
        for (const auto i : a) gt.set(i);

        UncertaintyMaps maps = compute_uncertainty_maps(stack);
        VoxelGrid mean = mean_prediction(stack);
        return TinyScene{d, a, b, std::move(gt), std::move(stack), std::move(maps),
                         std::move(mean)};
    }

    ScanInput scan() const { return ScanInput{mean, gt, maps}; }
};

} // namespace

TEST_CASE("lesion uncertainty is the log-sum of voxel uncertainties") {
    const Dims d{4, 1, 1};
    const VoxelGrid map(d, GridKind::uncertainty, {1.0f, 0.5f, 0.5f, 0.0f});
    Lesion l;
    l.id = 0;
    l.voxels = {Voxel{0, 0, 0}, Voxel{1, 0, 0}, Voxel{2, 0, 0}};
    CHECK(lesion_uncertainty(l, map) ==
          Catch::Approx(2.0 * std::log(0.5)).margin(1e-12));

    SECTION("zero uncertainty hits the log floor instead of -inf") {
        Lesion z;
        z.id = 0;
        z.voxels = {Voxel{3, 0, 0}};
        const double floor_log = std::log(1e-12);
        CHECK(lesion_uncertainty(z, map) == Catch::Approx(floor_log).margin(1e-9));
        CHECK(std::isfinite(lesion_uncertainty(z, map)));
    }
}

TEST_CASE("rescale maps the cohort onto [0,1] by min and max") {
    const std::vector<double> raws{-5.0, -1.0, -3.0};
    const auto scaled = rescale_cohort(raws);
    CHECK(scaled == std::vector<double>{0.0, 1.0, 0.5});

    SECTION("params clamp values outside the fitted range") {
        const RescaleParams p = rescale_params(raws);
        CHECK(p.min == -5.0);
        CHECK(p.max == -1.0);
        CHECK(p.apply(-7.0) == 0.0);
        CHECK(p.apply(3.0) == 1.0);
    }
    SECTION("a degenerate cohort maps to zero") {
        CHECK(rescale_cohort({2.5, 2.5, 2.5}) == std::vector<double>{0.0, 0.0, 0.0});
    }
    SECTION("an empty cohort is an argument error") {
        CHECK_THROWS_AS(rescale_cohort({}), argument_error);
        CHECK_THROWS_AS(rescale_params({}), argument_error);
    }
    SECTION("rescaling preserves ranks (strictly increasing transform)") {
        const std::vector<double> raw2{-10.0, -2.0, -7.5, -0.1, -4.0};
        const auto s2 = rescale_cohort(raw2);
        CHECK(oracles::spearman(raw2, s2) == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("eta domain and the retain rule") {
    CHECK_THROWS_AS(check_eta(-0.001), argument_error);
    CHECK_THROWS_AS(check_eta(1.001), argument_error);
    CHECK_THROWS_AS(check_eta(std::numeric_limits<double>::quiet_NaN()), argument_error);
    CHECK_NOTHROW(check_eta(0.0));
    CHECK_NOTHROW(check_eta(1.0));

    // Strictly-below cut, with eta == 1 retaining everything including the
    // cohort maximum at exactly 1.0.
    CHECK(retained_at(0.49, 0.5));
    CHECK_FALSE(retained_at(0.5, 0.5));
    CHECK_FALSE(retained_at(0.0, 0.0));
    CHECK(retained_at(1.0, 1.0));
    CHECK(retained_at(0.0, 1.0));
}

TEST_CASE("voxel filtering excludes voxels from both sides of the ratio") {
    const Dims d{4, 1, 1};
    const VoxelGrid prob(d, GridKind::probability, {0.9f, 0.9f, 0.1f, 0.1f});
    const VoxelGrid umap(d, GridKind::uncertainty, {0.0f, 1.0f, 0.0f, 1.0f});
    const LabelMask gt(d, {1, 1, 1, 0});

    // Rescaled uncertainties are {0,1,0,1}; eta = 0.5 keeps voxels 0 and 2.
    const VoxelFilterResult f = filter_voxels(prob, umap, 0.5, 0.5);
    CHECK(f.retained.bits() == std::vector<std::uint8_t>{1, 0, 1, 0});
    CHECK(f.predicted.bits() == std::vector<std::uint8_t>{1, 1, 0, 0});

    const VoxelCounts c = voxel_counts(f.predicted, gt, f.retained);
    CHECK(c.tp == 1);  // voxel 0
    CHECK(c.fn == 1);  // voxel 2
    CHECK(c.fp == 0);  // voxel 1 is predicted-but-wrong yet excluded
    CHECK(c.tn == 0);

    // Baseline by comparison counts the excluded voxels.
    LabelMask all(d);
    for (std::uint64_t i = 0; i < d.voxel_count(); ++i) all.set(i);
    const VoxelCounts base = voxel_counts(f.predicted, gt, all);
    CHECK(base.tp == 2);
    CHECK(base.fp == 0);
    CHECK(base.fn == 1);
    CHECK(base.tn == 1);
}

TEST_CASE("filter_lesions drops by scaled uncertainty and recompacts ids") {
    const TinyScene s = TinyScene::make();
    const LesionSet cands = connected_components_18(binarize(s.mean, 0.5));
    REQUIRE(cands.lesions.size() == 2);
    const LesionSet gt = prune_ground_truth(connected_components_18(s.gt));

    std::vector<double> raws;
    for (const auto& l : cands.lesions) {
        raws.push_back(lesion_uncertainty(l, s.maps.entropy));
    }
    // Blob A (4 voxels, sharper) must be more certain than blob B.
    REQUIRE(raws[0] < raws[1]);
    const auto scaled = rescale_cohort(raws);
    CHECK(scaled[0] == 0.0);
    CHECK(scaled[1] == 1.0);

    const MatchResult baseline = match_lesions(cands, gt);
    CHECK(baseline.tp == 1);
    CHECK(baseline.fp == 1);

    const MatchResult cut = filter_lesions(cands, scaled, gt, 0.9);
    CHECK(cut.tp == 1);
    CHECK(cut.fp == 0);
    CHECK(cut.fn == 0);

    const MatchResult keep_all = filter_lesions(cands, scaled, gt, 1.0);
    CHECK(keep_all.fp == 1);

    CHECK_THROWS_AS(filter_lesions(cands, {0.5}, gt, 0.9), argument_error);
}

TEST_CASE("roc sweep rows are theta-major with baseline first and ordered bins") {
    const TinyScene s = TinyScene::make();
    const std::vector<ScanInput> scans{s.scan()};
    const std::vector<double> etas{1.0, 0.9};
    const std::vector<double> thetas{0.5, 0.7};
    const RocTable t = roc_sweep(scans, Measure::entropy, Level::lesion, etas, thetas);

    // 2 thetas x 3 eta slots (baseline + 2) x 4 bins.
    REQUIRE(t.rows.size() == 24);
    const char* bins[4] = {"all", "small", "medium", "large"};
    std::size_t r = 0;
    for (const double theta : thetas) {
        for (int ei = 0; ei < 3; ++ei) {
            for (const char* bin : bins) {
                CAPTURE(r);
                CHECK(t.rows[r].theta == theta);
                CHECK(std::string(to_string(t.rows[r].bin)) == bin);
                if (ei == 0) {
                    CHECK(std::isinf(t.rows[r].eta));
                } else {
                    CHECK(t.rows[r].eta == etas[static_cast<std::size_t>(ei - 1)]);
                }
                ++r;
            }
        }
    }
}

TEST_CASE("roc sweep counts on the tiny scene are exact") {
    const TinyScene s = TinyScene::make();
    const std::vector<ScanInput> scans{s.scan()};
    const RocTable t =
        roc_sweep(scans, Measure::entropy, Level::lesion, {0.9}, {0.5, 0.7});

    const auto row = [&](double theta, bool baseline, BinFilter bin) {
        for (const auto& r : t.rows) {
            if (r.theta == theta && (std::isinf(r.eta) == baseline) && r.bin == bin) return r;
        }
        FAIL("row not found");
        return t.rows.front();
    };

    // theta 0.5: both blobs are candidates. Baseline: tp 1, fp 1.
    const RocRow b5 = row(0.5, true, BinFilter::all);
    CHECK(b5.tp == 1);
    CHECK(b5.fp == 1);
    CHECK(b5.fn == 0);
    CHECK(b5.tpr.value() == 1.0);
    CHECK(b5.fdr.value() == 0.5);
    CHECK(b5.retention == 1.0);

    // eta 0.9 removes blob B (scaled 1.0), halving small-bin retention.
    const RocRow f5 = row(0.5, false, BinFilter::all);
    CHECK(f5.tp == 1);
    CHECK(f5.fp == 0);
    CHECK(f5.retention == 0.5);
    const RocRow f5small = row(0.5, false, BinFilter::small);
    CHECK(f5small.retention == 0.5);
    CHECK(f5small.fp == 0);

    // theta 0.7: only blob A is a candidate; nothing for eta to remove.
    const RocRow b7 = row(0.7, true, BinFilter::all);
    CHECK(b7.tp == 1);
    CHECK(b7.fp == 0);
    const RocRow f7 = row(0.7, false, BinFilter::all);
    CHECK(f7.retention == 1.0);

    // tp + fn equals the ground-truth lesion count on every all-bin row.
    for (const auto& r : t.rows) {
        if (r.bin == BinFilter::all) CHECK(r.tp + r.fn == 1);
    }

    // Medium and large bins are empty and report retention 1.
    const RocRow m5 = row(0.5, false, BinFilter::medium);
    CHECK(m5.tp == 0);
    CHECK(m5.fp == 0);
    CHECK(m5.fn == 0);
    CHECK_FALSE(m5.tpr.has_value());
    CHECK(m5.retention == 1.0);
}

TEST_CASE("baseline rows are identical across measures") {
    const TinyScene s = TinyScene::make();
    const std::vector<ScanInput> scans{s.scan()};
    const std::vector<double> etas{0.5};
    const std::vector<double> thetas{0.3, 0.5, 0.7};

    std::vector<RocTable> tables;
    for (const Measure m :
         {Measure::entropy, Measure::mutual_info, Measure::sample_var}) {
        tables.push_back(roc_sweep(scans, m, Level::lesion, etas, thetas));
    }
    for (std::size_t i = 0; i < tables[0].rows.size(); ++i) {
        if (!std::isinf(tables[0].rows[i].eta)) continue;
        for (std::size_t k = 1; k < tables.size(); ++k) {
            const RocRow& a = tables[0].rows[i];
            const RocRow& b = tables[k].rows[i];
            CHECK(a.tp == b.tp);
            CHECK(a.fp == b.fp);
            CHECK(a.fn == b.fn);
            CHECK(a.retention == b.retention);
        }
    }
}

TEST_CASE("retention is non-increasing along decreasing etas") {
    const TinyScene s = TinyScene::make();
    const std::vector<ScanInput> scans{s.scan()};
    const std::vector<double> etas{1.0, 0.8, 0.6, 0.4, 0.2, 0.0};
    const RocTable t =
        roc_sweep(scans, Measure::mutual_info, Level::lesion, etas, {0.5});

    double prev = std::numeric_limits<double>::infinity();
    for (const auto& r : t.rows) {
        if (r.bin != BinFilter::all || std::isinf(r.eta)) continue;
        CHECK(r.retention <= prev);
        prev = r.retention;
    }
}

TEST_CASE("voxel-level sweep matches a direct count") {
    const TinyScene s = TinyScene::make();
    const std::vector<ScanInput> scans{s.scan()};
    const RocTable t = roc_sweep(scans, Measure::entropy, Level::voxel, {1.0}, {0.5});
    REQUIRE(t.rows.size() == 2);  // baseline + one eta, single bin "all"

    const VoxelFilterResult f = filter_voxels(s.mean, s.maps.entropy, 0.5, 1.0);
    const VoxelCounts direct = voxel_counts(f.predicted, s.gt, f.retained);
    const RocRow& r = t.rows[1];
    CHECK(r.tp == direct.tp);
    CHECK(r.fp == direct.fp);
    CHECK(r.fn == direct.fn);
    CHECK(r.bin == BinFilter::all);
}

TEST_CASE("roc sweep input validation") {
    const TinyScene s = TinyScene::make();
    const std::vector<ScanInput> scans{s.scan()};
    CHECK_THROWS_AS(roc_sweep({}, Measure::entropy, Level::lesion, {0.5}, {0.5}),
                    argument_error);
    CHECK_THROWS_AS(roc_sweep(scans, Measure::entropy, Level::lesion, {}, {0.5}),
                    argument_error);
    CHECK_THROWS_AS(roc_sweep(scans, Measure::entropy, Level::lesion, {0.5}, {}),
                    argument_error);
    CHECK_THROWS_AS(roc_sweep(scans, Measure::entropy, Level::lesion, {1.5}, {0.5}),
                    argument_error);
    CHECK_THROWS_AS(roc_sweep(scans, Measure::entropy, Level::lesion, {0.5}, {-0.5}),
                    argument_error);
    // The tiny scene's stack has no learned variances, so pred_var must be
    // rejected up front.
    CHECK_THROWS_AS(roc_sweep(scans, Measure::pred_var, Level::lesion, {0.5}, {0.5}),
                    argument_error);
}

TEST_CASE("csv encodes rows with empty fields for undefined rates") {
    RocTable t;
    RocRow r;
    r.measure = Measure::entropy;
    r.level = Level::lesion;
    r.bin = BinFilter::all;
    r.eta = std::numeric_limits<double>::infinity();
    r.theta = 0.5;
    r.tp = 3;
    r.fp = 1;
    r.fn = 1;
    r.tpr = 0.75;
    r.fdr = 0.25;
    r.retention = 1.0;
    t.rows.push_back(r);

    RocRow u = r;
    u.eta = 0.25;
    u.tp = u.fp = u.fn = 0;
    u.tpr.reset();
    u.fdr.reset();
    u.retention = 0.5;
    t.rows.push_back(u);

    const std::string csv = to_csv(t);
    const std::string expected =
        "measure,level,bin,eta,theta,tp,fp,fn,tpr,fdr,retention\n"
        "entropy,lesion,all,inf,0.5,3,1,1,0.75,0.25,1\n"
        "entropy,lesion,all,0.25,0.5,0,0,0,,,0.5\n";
    CHECK(csv == expected);

    const nlohmann::json j = to_json(t);
    CHECK(j["rows"][0]["eta"] == "inf");
    CHECK(j["rows"][1]["eta"] == 0.25);
    CHECK(j["rows"][1]["tpr"].is_null());
    CHECK(j["rows"][0]["tpr"] == 0.75);
}

TEST_CASE("level and bin names parse") {
    CHECK(parse_level("voxel") == Level::voxel);
    CHECK(parse_level("lesion") == Level::lesion);
    CHECK_THROWS_AS(parse_level("scan"), argument_error);
}
