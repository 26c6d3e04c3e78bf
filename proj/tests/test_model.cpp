#include <catch2/catch_amalgamated.hpp>

#include <numeric>
#include <vector>

#include "mcar/model.hpp"
#include "mcar/rng.hpp"

using namespace mcar;

TEST_CASE("encode_cell uses row-major mixed radix over sorted members") {
    DiscreteSpace space({2, 2, 2});
    // 1-based I/O values (2,1) on variables {1,3} are (1,0) internally
    CHECK(encode_cell(space, Pattern{0, 2}, {1, 0}) == 2);

    DiscreteSpace space2({4, 2});
    CHECK(encode_cell(space2, Pattern{0}, {2}) == 2);

    DiscreteSpace space3({2, 3});
    CHECK(encode_cell(space3, Pattern{0, 1}, {1, 2}) == 5);
}

TEST_CASE("encode_cell rejects out-of-range values") {
    DiscreteSpace space({2, 3});
    CHECK_THROWS_AS(encode_cell(space, Pattern{0}, {2}), RangeError);
    CHECK_THROWS_AS(encode_cell(space, Pattern{0, 1}, {0}), RangeError);
}

TEST_CASE("encode/decode round-trips over every cell") {
    DiscreteSpace space({2, 3, 5, 7, 11, 13});
    Pattern all{0, 1, 2, 3, 4, 5};
    const std::uint64_t cells = pattern_cells(space, all);
    REQUIRE(cells == 30030);
    std::vector<bool> seen(cells, false);
    for (std::uint64_t i = 0; i < cells; ++i) {
        const auto vals = decode_cell(space, all, i);
        const std::uint64_t back = encode_cell(space, all, vals);
        REQUIRE(back == i);
        REQUIRE(!seen[back]);
        seen[back] = true;
    }
}

TEST_CASE("restrict sums out dropped coordinates") {
    DiscreteSpace space({2, 2});
    Pattern full{0, 1};

    SECTION("uniform 2x2 to first coordinate") {
        std::vector<double> mass{0.25, 0.25, 0.25, 0.25};
        auto r = restrict_table(space, full, mass, Pattern{0});
        CHECK(r[0] == Catch::Approx(0.5));
        CHECK(r[1] == Catch::Approx(0.5));
    }
    SECTION("column sums") {
        std::vector<double> mass{0.1, 0.4, 0.3, 0.2};
        auto r = restrict_table(space, full, mass, Pattern{1});
        CHECK(r[0] == Catch::Approx(0.4));
        CHECK(r[1] == Catch::Approx(0.6));
    }
    SECTION("identity restriction") {
        std::vector<double> mass{0.1, 0.4, 0.3, 0.2};
        auto r = restrict_table(space, full, mass, full);
        CHECK(r == mass);
    }
    SECTION("non-subset rejected") {
        std::vector<double> mass{0.25, 0.25, 0.25, 0.25};
        DiscreteSpace s3({2, 2, 2});
        CHECK_THROWS_AS(restrict_table(s3, Pattern{0, 1}, mass, Pattern{2}),
                        DomainError);
    }
}

TEST_CASE("restrict is transitive and preserves mass") {
    DiscreteSpace space({3, 2, 4, 2});
    Pattern big{0, 1, 2, 3};
    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> mass(pattern_cells(space, big));
        double total = 0.0;
        for (double& v : mass) {
            v = rng.next_double();
            total += v;
        }
        for (double& v : mass) v /= total;

        Pattern mid{0, 2, 3};
        Pattern small{0, 3};
        auto via = restrict_table(space, mid, restrict_table(space, big, mass, mid),
                                  small);
        auto direct = restrict_table(space, big, mass, small);
        REQUIRE(via.size() == direct.size());
        for (std::size_t i = 0; i < via.size(); ++i)
            CHECK(via[i] == Catch::Approx(direct[i]).margin(1e-14));

        const double sum = std::accumulate(direct.begin(), direct.end(), 0.0);
        CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("pattern and collection invariants") {
    CHECK_THROWS_AS(Pattern(std::vector<int>{}), DomainError);
    CHECK_THROWS_AS(Pattern({1, 1}), DomainError);
    CHECK(Pattern({2, 0}).vars() == std::vector<int>{0, 2});
    CHECK(Pattern({0, 2}).label() == "{1,3}");

    CHECK_THROWS_AS(PatternCollection({Pattern{0}, Pattern{0}}), DomainError);
    PatternCollection ok({Pattern{0, 1}, Pattern{1, 2}});
    CHECK(ok.find(Pattern{1, 2}) == 1);
    CHECK(ok.find(Pattern{0, 2}) == -1);
}

TEST_CASE("marginal sequence validates probability tables") {
    DiscreteSpace space({2, 2});
    PatternCollection coll({Pattern{0, 1}});

    CHECK_THROWS_AS(
        MarginalSequence(space, coll, {{0.5, 0.5, 0.1, 0.0}}),
        DomainError);
    CHECK_THROWS_AS(
        MarginalSequence(space, coll, {{0.5, 0.5, -0.1, 0.1}}),
        DomainError);
    // measure tables skip the sum-to-one check
    MarginalSequence cone(space, coll, {{0.5, 0.5, 0.1, 0.0}}, false);
    CHECK(!cone.is_probability());

    MarginalSequence seq(space, coll, {{0.25, 0.25, 0.25, 0.25}});
    CHECK(seq.stacked_dim() == 4);
    CHECK(seq.probability_defect() <= 1e-12);
}

TEST_CASE("sub_sequence relabels variables and restricts tables") {
    DiscreteSpace space({2, 3, 2});
    PatternCollection coll({Pattern{0, 1, 2}});
    std::vector<double> mass(12, 1.0 / 12);
    MarginalSequence seq(space, coll, {mass});

    auto sub = sub_sequence(seq, {0, 2}, {Pattern{0, 2}}, {0});
    CHECK(sub.space().dim() == 2);
    CHECK(sub.space().size(0) == 2);
    CHECK(sub.space().size(1) == 2);
    CHECK(sub.pattern(0) == Pattern({0, 1}));
    for (double v : sub.table(0)) CHECK(v == Catch::Approx(0.25));
}
