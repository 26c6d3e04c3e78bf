#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mcar/lp.hpp"
#include "mcar/model.hpp"
#include "mcar/rng.hpp"

using namespace mcar;

namespace {

PatternCollection triple_pairs() {
    return PatternCollection({Pattern{0, 1}, Pattern{1, 2}, Pattern{0, 2}});
}

// Independent optimality certificate for R = 1 - max{1'p : Ap <= b, p >= 0}:
// primal feasibility of p*, dual feasibility of the prices, and a closed
// duality gap. Checking these needs no LP machinery of its own.
void check_certificates(const MarginalOperator& op, const MarginalSequence& seq,
                        const WitnessDecomposition& w, double tol = 1e-7) {
    const auto b = stack_tables(seq);
    const auto margins = op.apply(w.joint_mass);
    double primal = 0.0;
    for (double v : w.joint_mass) {
        REQUIRE(v >= -tol);
        primal += v;
    }
    for (std::size_t i = 0; i < b.size(); ++i) REQUIRE(margins[i] <= b[i] + tol);

    // dual witness f = |S| z - 1 capped at |S|-1; recover z and check A'z >= 1
    const int ns = seq.count();
    std::vector<double> z;
    for (const auto& f : w.dual)
        for (double v : f) {
            REQUIRE(v >= -1.0 - tol);
            REQUIRE(v <= ns - 1.0 + tol);
            z.push_back((v + 1.0) / ns);
        }
    for (std::uint64_t x = 0; x < op.cols(); ++x) {
        double col = 0.0;
        for (std::uint64_t r : op.column(x)) col += z[r];
        // capped entries only ever increase the column sums of f = |S|z-1
        REQUIRE(ns * col - ns >= -ns * tol);
    }
    REQUIRE(std::abs(w.dual_value - w.index) <= tol);
    REQUIRE(std::abs((1.0 - primal) - w.index_raw) <= tol);
}

MarginalSequence pr_box() {
    DiscreteSpace space({2, 2, 2});
    // equal / equal / anti: mass 1/2 on each diagonal, anti-diagonal for {1,3}
    std::vector<double> eq{0.5, 0.0, 0.0, 0.5};
    std::vector<double> anti{0.0, 0.5, 0.5, 0.0};
    return MarginalSequence(space, triple_pairs(), {eq, eq, anti});
}

MarginalSequence random_compatible(const DiscreteSpace& space,
                                   const PatternCollection& coll, Rng& rng) {
    MarginalOperator op(space, coll);
    std::vector<double> joint(op.cols());
    double total = 0.0;
    for (double& v : joint) {
        v = -std::log(1.0 - rng.next_double());
        total += v;
    }
    for (double& v : joint) v /= total;
    const auto stacked = op.apply(joint);
    std::vector<std::vector<double>> tables;
    for (int s = 0; s < coll.count(); ++s) {
        const auto lo = op.row_offset(s), hi = op.row_offset(s + 1);
        tables.emplace_back(stacked.begin() + static_cast<std::ptrdiff_t>(lo),
                            stacked.begin() + static_cast<std::ptrdiff_t>(hi));
        double sum = 0.0;
        for (double v : tables.back()) sum += v;
        for (double& v : tables.back()) v /= sum;
    }
    return MarginalSequence(space, coll, std::move(tables));
}

MarginalSequence random_tables(const DiscreteSpace& space,
                               const PatternCollection& coll, Rng& rng) {
    std::vector<std::vector<double>> tables;
    for (const auto& p : coll.patterns) {
        std::vector<double> t(pattern_cells(space, p));
        double sum = 0.0;
        for (double& v : t) {
            v = rng.next_double();
            sum += v;
        }
        for (double& v : t) v /= sum;
        tables.push_back(std::move(t));
    }
    return MarginalSequence(space, coll, std::move(tables));
}

}  // namespace

TEST_CASE("marginal operator matches the 2x2x2 pairwise layout") {
    DiscreteSpace space({2, 2, 2});
    MarginalOperator op(space, triple_pairs());
    REQUIRE(op.rows() == 12);
    REQUIRE(op.cols() == 8);

    // transpose of the operator, rows ordered (11.),(12.),(21.),(22.) for {1,2},
    // (.11),(.12),(.21),(.22) for {2,3}, (1.1),(2.1),(1.2),(2.2) for {1,3}
    const int expected[8][12] = {
        {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0},
        {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0},
        {0, 1, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0},
        {0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0},
        {0, 0, 1, 0, 1, 0, 0, 0, 0, 1, 0, 0},
        {0, 0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 1},
        {0, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0},
        {0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1},
    };
    // the published {1,3} block is enumerated column-major; remap to ours
    const int row_map[12] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 10, 9, 11};
    const auto dense = op.dense();
    for (int x = 0; x < 8; ++x)
        for (int r = 0; r < 12; ++r)
            REQUIRE(dense[static_cast<std::size_t>(row_map[r])]
                         [static_cast<std::size_t>(x)] == expected[x][r]);
    // every column must carry exactly |S| ones
    for (int x = 0; x < 8; ++x) {
        int ones = 0;
        for (std::uint64_t r = 0; r < 12; ++r)
            ones += dense[r][static_cast<std::size_t>(x)] != 0.0;
        REQUIRE(ones == 3);
    }
}

TEST_CASE("operator applied to the uniform joint gives uniform marginals") {
    DiscreteSpace space({3, 2, 2});
    MarginalOperator op(space, triple_pairs());
    std::vector<double> joint(op.cols(), 1.0 / static_cast<double>(op.cols()));
    const auto stacked = op.apply(joint);
    for (int s = 0; s < 3; ++s) {
        const auto lo = op.row_offset(s), hi = op.row_offset(s + 1);
        for (auto i = lo; i < hi; ++i)
            CHECK(stacked[i] == Catch::Approx(1.0 / static_cast<double>(hi - lo)));
    }
}

TEST_CASE("strongly contextual triple has index one") {
    const auto seq = pr_box();
    MarginalOperator op(seq.space(), seq.collection());
    const auto w = incompatibility_index(op, seq);
    CHECK(w.index == Catch::Approx(1.0).margin(1e-9));
    CHECK(!w.closest_compatible.has_value());
    check_certificates(op, seq, w);

    // independent account of R = 1: no joint cell is charged positive mass
    // by all three tables
    const auto b = stack_tables(seq);
    bool common_support = false;
    for (std::uint64_t x = 0; x < op.cols(); ++x) {
        bool all_positive = true;
        for (std::uint64_t r : op.column(x)) all_positive &= b[r] > 0.0;
        common_support |= all_positive;
    }
    CHECK(!common_support);
}

TEST_CASE("compatible sequences have index zero") {
    Rng rng(42);
    for (int rep = 0; rep < 25; ++rep) {
        DiscreteSpace space({2, 3, 2});
        const auto seq = random_compatible(space, triple_pairs(), rng);
        const auto w = incompatibility_index(seq);
        CHECK(w.index <= 1e-8);
        CHECK(inconsistency(seq) <= 1e-12);
    }
}

TEST_CASE("simulation family point: p_dot21 = 0.4 gives R = 0.3") {
    DiscreteSpace space({2, 2, 2});
    std::vector<double> p12{0.0, 0.5, 0.5, 0.0};
    std::vector<double> p13{0.25, 0.25, 0.25, 0.25};
    const double p21 = 0.4;
    std::vector<double> p23{0.5 - p21, p21, p21, 0.5 - p21};
    MarginalSequence seq(space, triple_pairs(), {p12, p23, p13});
    REQUIRE(inconsistency(seq) <= 1e-12);

    MarginalOperator op(space, triple_pairs());
    const auto w = incompatibility_index(op, seq);
    CHECK(w.index == Catch::Approx(0.3).margin(1e-9));
    check_certificates(op, seq, w);
}

TEST_CASE("witness decomposition reconstructs the input") {
    Rng rng(99);
    DiscreteSpace space({2, 2, 2});
    const auto coll = triple_pairs();
    MarginalOperator op(space, coll);
    for (int rep = 0; rep < 50; ++rep) {
        const auto seq = random_tables(space, coll, rng);
        const auto w = incompatibility_index(op, seq);
        CHECK(w.index >= 0.0);
        CHECK(w.index <= 1.0);
        CHECK(std::abs(w.index_raw - w.index) <= 1e-8);
        check_certificates(op, seq, w);

        if (w.closest_compatible && w.residual) {
            const auto q = stack_tables(*w.closest_compatible);
            const auto t = stack_tables(*w.residual);
            const auto b = stack_tables(seq);
            for (std::size_t i = 0; i < b.size(); ++i)
                REQUIRE(std::abs((1.0 - w.index) * q[i] + w.index * t[i] - b[i]) <=
                        1e-8);
        }
        if (w.closest_compatible) {
            const auto wq = incompatibility_index(op, *w.closest_compatible);
            CHECK(wq.index <= 1e-7);
        }
        // total-variation lower bound
        CHECK(w.index >= inconsistency(seq) / 3.0 - 1e-8);
    }
}

TEST_CASE("index is convex in the sequence") {
    Rng rng(123);
    DiscreteSpace space({2, 2, 2});
    const auto coll = triple_pairs();
    MarginalOperator op(space, coll);
    for (int rep = 0; rep < 25; ++rep) {
        const auto a = random_tables(space, coll, rng);
        const auto b = random_tables(space, coll, rng);
        const double t = rng.next_double();
        std::vector<std::vector<double>> mixed;
        for (int s = 0; s < coll.count(); ++s) {
            std::vector<double> m(a.table(s).size());
            for (std::size_t i = 0; i < m.size(); ++i)
                m[i] = (1.0 - t) * a.table(s)[i] + t * b.table(s)[i];
            mixed.push_back(std::move(m));
        }
        MarginalSequence mix(space, coll, std::move(mixed));
        const double ra = incompatibility_index(op, a).index;
        const double rb = incompatibility_index(op, b).index;
        const double rm = incompatibility_index(op, mix).index;
        CHECK(rm <= (1.0 - t) * ra + t * rb + 1e-8);
    }
}

TEST_CASE("index reaches one exactly when common support is empty") {
    Rng rng(2024);
    DiscreteSpace space({2, 2, 2});
    const auto coll = triple_pairs();
    MarginalOperator op(space, coll);
    int saw_degenerate = 0;
    for (int rep = 0; rep < 60; ++rep) {
        // sparse random tables make empty common support reasonably likely
        std::vector<std::vector<double>> tables;
        for (const auto& p : coll.patterns) {
            std::vector<double> t(pattern_cells(space, p), 0.0);
            double sum = 0.0;
            for (double& v : t) {
                if (rng.next_double() < 0.45) v = rng.next_double();
                sum += v;
            }
            if (sum == 0.0) {
                t[0] = 1.0;
                sum = 1.0;
            }
            for (double& v : t) v /= sum;
            tables.push_back(std::move(t));
        }
        MarginalSequence seq(space, coll, std::move(tables));
        const auto b = stack_tables(seq);
        bool common_support = false;
        for (std::uint64_t x = 0; x < op.cols(); ++x) {
            bool all = true;
            for (std::uint64_t r : op.column(x)) all &= b[r] > 0.0;
            common_support |= all;
        }
        const double r = incompatibility_index(op, seq).index;
        if (common_support) {
            CHECK(r < 1.0 - 1e-9);
        } else {
            CHECK(r == Catch::Approx(1.0).margin(1e-9));
            ++saw_degenerate;
        }
    }
    CHECK(saw_degenerate > 0);
}

TEST_CASE("certificates hold across the larger operator shapes") {
    struct Shape {
        DiscreteSpace space;
        PatternCollection coll;
    };
    const std::vector<Shape> shapes = {
        // binned continuous triple
        {DiscreteSpace({4, 4, 2}), triple_pairs()},
        // five four-variable margins of a binary 5-cube
        {DiscreteSpace({2, 2, 2, 2, 2}),
         PatternCollection({Pattern{0, 1, 2, 3}, Pattern{0, 1, 2, 4},
                            Pattern{0, 1, 3, 4}, Pattern{0, 2, 3, 4},
                            Pattern{1, 2, 3, 4}})},
        // wide head alphabet
        {DiscreteSpace({6, 2, 2}), triple_pairs()},
    };
    for (std::size_t si = 0; si < shapes.size(); ++si) {
        const auto& [space, coll] = shapes[si];
        MarginalOperator op(space, coll);
        Rng rng(900 + si);
        for (int rep = 0; rep < 40; ++rep) {
            const auto seq = random_tables(space, coll, rng);
            const auto w = incompatibility_index(op, seq);
            check_certificates(op, seq, w);
        }
    }
}

TEST_CASE("uniform tables with heavy pivot ties still certify") {
    DiscreteSpace space({2, 2, 2, 2, 2});
    PatternCollection coll({Pattern{0, 1, 2, 3}, Pattern{0, 1, 2, 4},
                            Pattern{0, 1, 3, 4}, Pattern{0, 2, 3, 4},
                            Pattern{1, 2, 3, 4}});
    MarginalOperator op(space, coll);
    std::vector<std::vector<double>> tables(5,
                                            std::vector<double>(16, 1.0 / 16));
    MarginalSequence seq(space, coll, std::move(tables));
    const auto w = incompatibility_index(op, seq);
    CHECK(w.index <= 1e-9);
    check_certificates(op, seq, w);
}

TEST_CASE("joint enumeration guard") {
    DiscreteSpace space({64, 64, 64, 64});  // 2^24 joint cells
    CHECK_THROWS_AS(space.joint_size(), CapacityError);
    PatternCollection coll({Pattern{0, 1}, Pattern{2, 3}});
    CHECK_THROWS_AS(MarginalOperator(space, coll), CapacityError);
}

TEST_CASE("inconsistency measures the worst overlap disagreement") {
    DiscreteSpace space({2, 2, 2});
    PatternCollection coll({Pattern{0, 1}, Pattern{1, 2}});
    std::vector<double> p12{0.3, 0.3, 0.3, 0.1};  // X2 margin (0.6, 0.4)
    std::vector<double> p23{0.2, 0.2, 0.3, 0.3};  // X2 margin (0.4, 0.6)
    MarginalSequence seq(space, coll, {p12, p23});
    CHECK(inconsistency(seq) == Catch::Approx(0.2));

    PatternCollection disjoint({Pattern{0}, Pattern{2}});
    MarginalSequence d(space, disjoint, {{0.5, 0.5}, {0.9, 0.1}});
    CHECK(inconsistency(d) == 0.0);
}
