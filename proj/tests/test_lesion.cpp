// Binarisation, 18-connected components, pruning, dilation, and the lesion
// JSON form.
#include <catch2/catch_amalgamated.hpp>

#include "lesionuq/lesion.hpp"
#include "lesionuq/rng.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

using namespace lesionuq;

TEST_CASE("size bins") {
    CHECK(size_bin(1) == SizeBin::subthreshold);
    CHECK(size_bin(2) == SizeBin::subthreshold);
    CHECK(size_bin(3) == SizeBin::small);
    CHECK(size_bin(10) == SizeBin::small);
    CHECK(size_bin(11) == SizeBin::medium);
    CHECK(size_bin(50) == SizeBin::medium);
    CHECK(size_bin(51) == SizeBin::large);
    CHECK(size_bin(100000) == SizeBin::large);
    CHECK(parse_size_bin("small") == SizeBin::small);
    CHECK_THROWS_AS(parse_size_bin("tiny"), argument_error);
}

TEST_CASE("binarize thresholds inclusively") {
    const VoxelGrid g(Dims{4, 1, 1}, GridKind::probability, {0.0f, 0.5f, 0.4999f, 1.0f});
    const LabelMask m = binarize(g, 0.5);
    CHECK(m.bits() == std::vector<std::uint8_t>{0, 1, 0, 1});

    // theta = 0 keeps everything (p >= 0 always); theta = 1 keeps only ones.
    CHECK(binarize(g, 0.0).count_set() == 4);
    CHECK(binarize(g, 1.0).count_set() == 1);

    CHECK_THROWS_AS(binarize(g, -0.01), argument_error);
    CHECK_THROWS_AS(binarize(g, 1.01), argument_error);
}

TEST_CASE("18-connectivity joins edges but not corners") {
    const Dims d{2, 2, 2};

    // Two voxels sharing only a corner: (0,0,0) and (1,1,1).
    LabelMask corner(d);
    corner.set(0, 0, 0);
    corner.set(1, 1, 1);
    CHECK(connected_components_18(corner).lesions.size() == 2);

    // Two voxels sharing an edge: (0,0,0) and (1,1,0).
    LabelMask edge(d);
    edge.set(0, 0, 0);
    edge.set(1, 1, 0);
    CHECK(connected_components_18(edge).lesions.size() == 1);

    // Face neighbours.
    LabelMask face(d);
    face.set(0, 0, 0);
    face.set(1, 0, 0);
    CHECK(connected_components_18(face).lesions.size() == 1);
}

TEST_CASE("component ids follow first-encounter order in the raster scan") {
    const Dims d{5, 1, 1};
    LabelMask m(d);
    m.set(0, 0, 0);
    m.set(3, 0, 0);
    m.set(4, 0, 0);
    const LesionSet set = connected_components_18(m);
    REQUIRE(set.lesions.size() == 2);
    CHECK(set.lesions[0].id == 0);
    CHECK(set.lesions[0].voxels.size() == 1);
    CHECK(set.lesions[0].voxels[0].x == 0);
    CHECK(set.lesions[1].id == 1);
    CHECK(set.lesions[1].voxels.size() == 2);
}

TEST_CASE("components agree with BFS flood fill on random masks") {
    Xoshiro256StarStar rng(0xc0ffeeULL);
    for (int rep = 0; rep < 60; ++rep) {
        const Dims d{10, 9, 4};
        LabelMask m(d);
        const double density = rng.uniform(0.05, 0.6);
        for (std::uint64_t i = 0; i < d.voxel_count(); ++i) {
            if (rng.bernoulli(density)) m.set(i);
        }
        const auto lib = oracles::canonical_components(connected_components_18(m));
        const auto ref = oracles::flood_fill_components(m);
        CAPTURE(rep, density);
        REQUIRE(lib == ref);
    }
}

TEST_CASE("round trip through to_mask") {
    Xoshiro256StarStar rng(0x1234ULL);
    const Dims d{7, 6, 5};
    LabelMask m(d);
    for (std::uint64_t i = 0; i < d.voxel_count(); ++i) {
        if (rng.bernoulli(0.3)) m.set(i);
    }
    const LesionSet set = connected_components_18(m);
    const LabelMask back = set.to_mask();
    CHECK(back.bits() == m.bits());
}

TEST_CASE("prune drops sub-3-voxel components and recompacts ids") {
    const Dims d{9, 1, 1};
    LabelMask m(d);
    m.set(0, 0, 0);  // size 1: dropped
    m.set(2, 0, 0);  // size 3: kept
    m.set(3, 0, 0);
    m.set(4, 0, 0);
    m.set(6, 0, 0);  // size 2: dropped
    m.set(7, 0, 0);
    const LesionSet pruned = prune_ground_truth(connected_components_18(m));
    REQUIRE(pruned.lesions.size() == 1);
    CHECK(pruned.lesions[0].id == 0);
    CHECK(pruned.lesions[0].size() == 3);
    CHECK(pruned.lesions[0].bin() == SizeBin::small);
}

TEST_CASE("dilation adds the 18-neighbourhood inside bounds") {
    const Dims d{3, 3, 3};
    Lesion l;
    l.id = 0;
    l.voxels = {Voxel{1, 1, 1}};
    const auto dilated = dilate_18(l, d);
    // Centre voxel plus its 18 neighbours, all in bounds.
    CHECK(dilated.size() == 19);

    // In a corner most neighbours fall outside.
    Lesion corner;
    corner.id = 0;
    corner.voxels = {Voxel{0, 0, 0}};
    const auto cd = dilate_18(corner, d);
    // (0,0,0) plus face neighbours (3) plus in-bounds edge neighbours (3).
    CHECK(cd.size() == 7);

    // Dilated output is sorted and duplicate-free.
    Lesion pair;
    pair.id = 0;
    pair.voxels = {Voxel{1, 1, 1}, Voxel{1, 1, 2}};
    const auto pd = dilate_18(pair, d);
    CHECK(std::is_sorted(pd.begin(), pd.end()));
    CHECK(std::adjacent_find(pd.begin(), pd.end()) == pd.end());
}

TEST_CASE("lesion set json round-trips") {
    const Dims d{6, 5, 4};
    Xoshiro256StarStar rng(0xabcdULL);
    LabelMask m(d);
    for (std::uint64_t i = 0; i < d.voxel_count(); ++i) {
        if (rng.bernoulli(0.25)) m.set(i);
    }
    const LesionSet set = connected_components_18(m);
    const nlohmann::json j = to_json(set);
    const LesionSet back = lesion_set_from_json(j);
    REQUIRE(back.lesions.size() == set.lesions.size());
    CHECK(oracles::canonical_components(back) == oracles::canonical_components(set));
    for (std::size_t i = 0; i < set.lesions.size(); ++i) {
        CHECK(back.lesions[i].id == set.lesions[i].id);
    }
}

TEST_CASE("lesion set json rejects out-of-bounds voxels") {
    nlohmann::json j;
    j["dims"] = {2, 2, 1};
    j["lesions"] = nlohmann::json::array();
    j["lesions"].push_back({{"id", 0},
                            {"size", 1},
                            {"bin", "subthreshold"},
                            {"voxels", {{5, 0, 0}}}});
    CHECK_THROWS_AS(lesion_set_from_json(j), format_error);
}
