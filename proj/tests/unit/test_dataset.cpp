#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "orbitvae/dataset.hpp"
#include "orbitvae/errors.hpp"
#include "support.hpp"

using namespace orbitvae;
using testing_support::earth_moon;
using testing_support::Gen;
using testing_support::l1_family;

namespace {

Catalog small_catalog(int n = 4) {
    Catalog c;
    c.orbits.assign(l1_family().orbits.begin(), l1_family().orbits.begin() + n);
    return c;
}

OrbitTensor random_tensor(Gen& g, std::size_t n, std::size_t nodes) {
    OrbitTensor t(n, nodes, earth_moon());
    for (double& v : t.values()) v = g.uniform(-3, 3);
    for (std::size_t i = 0; i < n; ++i) t.labels[i] = "f" + std::to_string(i % 3);
    return t;
}

// Three orbits of two nodes whose channel 0 holds 2, 4, 6 and channel 2 is constant.
OrbitTensor tiny_tensor() {
    OrbitTensor t(3, 2, earth_moon());
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t c = 0; c < 7; ++c) {
            for (std::size_t k = 0; k < 2; ++k) t.at(i, c, k) = static_cast<double>(c + k + i);
        }
        t.at(i, 0, 0) = t.at(i, 0, 1) = 2.0 * static_cast<double>(i + 1);
        t.at(i, 2, 0) = t.at(i, 2, 1) = 0.0;
        t.labels[i] = "x";
    }
    return t;
}

}  // namespace

TEST(BuildTensor, ShapeAndLabels) {
    const OrbitTensor t = build_tensor(small_catalog(), 100);
    EXPECT_EQ(t.num_orbits(), 4u);
    EXPECT_EQ(t.n_nodes(), 100u);
    EXPECT_EQ(t.values().size(), 4u * 7 * 100);
    EXPECT_FALSE(t.normalized);
    ASSERT_EQ(t.labels.size(), 4u);
    EXPECT_EQ(t.labels[0], "lyapunov-L1");
}

TEST(BuildTensor, TimeChannelAndEndpoints) {
    const Catalog c = small_catalog();
    const OrbitTensor t = build_tensor(c, 100);
    for (std::size_t i = 0; i < c.orbits.size(); ++i) {
        const auto& o = c.orbits[i];
        EXPECT_EQ(t.at(i, kTime, 0), 0.0);
        EXPECT_EQ(t.at(i, kTime, 99), o.period);
        EXPECT_DOUBLE_EQ(t.at(i, kTime, 33), 33.0 * o.period / 99.0);
        EXPECT_TRUE((t.state(i, 0).array() == o.initial_state.array()).all());
        EXPECT_LT((t.state(i, 99) - o.initial_state).norm(), 1e-9);
    }
}

TEST(BuildTensor, MatchesDirectPropagation) {
    const Catalog c = small_catalog(2);
    const OrbitTensor t = build_tensor(c, 50);
    const auto& o = c.orbits[1];
    for (std::size_t k : {7u, 25u, 41u}) {
        const StateVector s = propagate(earth_moon(), o.initial_state, t.at(1, kTime, k));
        EXPECT_LT((t.state(1, k) - s).norm(), 1e-11);
    }
}

TEST(BuildTensor, ParallelMatchesSerial) {
    const Catalog c = small_catalog(6);
    EXPECT_EQ(build_tensor(c, 40, {}, 1), build_tensor(c, 40, {}, 3));
}

TEST(BuildTensor, RejectsBadArguments) {
    EXPECT_THROW(build_tensor(small_catalog(), 1), InvalidArgument);
    EXPECT_THROW(build_tensor(Catalog{}, 10), InvalidArgument);
}

TEST(BuildTensor, FailureNamesOrbit) {
    Catalog c = small_catalog(3);
    c.orbits[2].initial_state = StateVector(1.0 - kEarthMoonMu + 1e-3, 0, 0, 0, 0, 0);
    try {
        build_tensor(c, 20);
        FAIL() << "no exception";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("orbit 2"), std::string::npos) << e.what();
    }
}

TEST(Normalize, ThreeValues) {
    const auto [n, p] = normalize(tiny_tensor());
    EXPECT_EQ(p.min[0], 2.0);
    EXPECT_EQ(p.max[0], 6.0);
    EXPECT_EQ(n.at(0, 0, 0), 0.0);
    EXPECT_EQ(n.at(1, 0, 0), 0.5);
    EXPECT_EQ(n.at(2, 0, 1), 1.0);
    EXPECT_TRUE(n.normalized);
}

TEST(Normalize, DegenerateChannel) {
    const auto [n, p] = normalize(tiny_tensor());
    ASSERT_EQ(p.degenerate.size(), 1u);
    EXPECT_EQ(p.degenerate[0], 2);
    EXPECT_TRUE(p.is_degenerate(2));
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(n.at(i, 2, 1), 0.5);
    const OrbitTensor back = denormalize(n, p);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.at(i, 2, 0), 0.0);
}

TEST(Normalize, RangeIsUnitInterval) {
    const auto [n, p] = normalize(build_tensor(small_catalog(), 60));
    for (std::size_t c = 0; c < 7; ++c) {
        double lo = 2, hi = -1;
        for (std::size_t i = 0; i < n.num_orbits(); ++i)
            for (std::size_t k = 0; k < n.n_nodes(); ++k) {
                lo = std::min(lo, n.at(i, c, k));
                hi = std::max(hi, n.at(i, c, k));
            }
        if (p.is_degenerate(static_cast<int>(c))) {
            EXPECT_EQ(lo, 0.5);
            EXPECT_EQ(hi, 0.5);
        } else {
            EXPECT_EQ(lo, 0.0) << c;
            EXPECT_EQ(hi, 1.0) << c;
        }
    }
    // planar family: z and vz are identically zero
    EXPECT_TRUE(p.is_degenerate(kPosZ));
    EXPECT_TRUE(p.is_degenerate(kVelZ));
}

TEST(Normalize, RejectsNonFiniteAndRepeat) {
    OrbitTensor t = tiny_tensor();
    t.at(1, 3, 0) = std::nan("");
    EXPECT_THROW(normalize(t), NumericError);
    const auto [n, p] = normalize(tiny_tensor());
    EXPECT_THROW(normalize(n), InvalidArgument);
    EXPECT_THROW(denormalize(tiny_tensor(), p), InvalidArgument);
}

TEST(Normalize, ApplyIsIdempotent) {
    const auto [n, p] = normalize(tiny_tensor());
    EXPECT_EQ(apply_normalization(n, p), n);
    EXPECT_EQ(apply_normalization(tiny_tensor(), p), n);
}

TEST(Normalize, DenormalizeEndpointsExact) {
    const auto [n, p] = normalize(tiny_tensor());
    const OrbitTensor back = denormalize(n, p);
    EXPECT_EQ(back.at(0, 0, 0), 2.0);
    EXPECT_EQ(back.at(2, 0, 0), 6.0);
}

TEST(DatasetProperty, RoundTrip) {
    Gen g(31);
    for (int trial = 0; trial < 20; ++trial) {
        const OrbitTensor t = random_tensor(g, static_cast<std::size_t>(g.integer(1, 6)),
                                            static_cast<std::size_t>(g.integer(2, 30)));
        const auto [n, p] = normalize(t);
        const OrbitTensor back = denormalize(n, p);
        double worst = 0;
        for (std::size_t j = 0; j < t.values().size(); ++j)
            worst = std::max(worst, std::abs(back.values()[j] - t.values()[j]));
        EXPECT_LT(worst, 1e-12) << trial;
    }
}

TEST(Orbt1, RoundTripIsBitwise) {
    Gen g(32);
    const auto [n, p] = normalize(random_tensor(g, 5, 17));
    const std::string bytes = encode_tensor(n, p);
    const auto [t2, p2] = decode_tensor(bytes);
    EXPECT_EQ(t2, n);
    EXPECT_EQ(p2, p);
    EXPECT_EQ(encode_tensor(t2, p2), bytes);
}

TEST(Orbt1, PayloadLengthAndLayout) {
    Gen g(33);
    const OrbitTensor t = random_tensor(g, 3, 11);
    const std::string bytes = encode_tensor(t, identity_params());
    const std::size_t nl = bytes.find('\n');
    ASSERT_NE(nl, std::string::npos);
    EXPECT_EQ(bytes.size() - nl - 1, 3u * 7 * 11 * 8);
    EXPECT_EQ(bytes.substr(0, 1), "{");
    EXPECT_NE(bytes.substr(0, nl).find("\"ORBT1\""), std::string::npos);
    // Element (1, 4, 6) in little-endian at its row-major offset.
    const std::size_t off = nl + 1 + ((1 * 7 + 4) * 11 + 6) * 8;
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(bytes[off + static_cast<std::size_t>(b)]);
    double v;
    std::memcpy(&v, &bits, 8);
    EXPECT_EQ(v, t.at(1, 4, 6));
}

TEST(Orbt1, RejectsLabelMismatch) {
    Gen g(37);
    OrbitTensor t = random_tensor(g, 2, 5);
    t.labels.pop_back();
    EXPECT_THROW(encode_tensor(t, identity_params()), ShapeError);
}

TEST(Orbt1, Truncated) {
    Gen g(34);
    std::string bytes = encode_tensor(random_tensor(g, 2, 5), identity_params());
    bytes.resize(bytes.size() - 8);
    try {
        decode_tensor(bytes);
        FAIL() << "no exception";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos) << e.what();
    }
    EXPECT_THROW(decode_tensor(bytes + std::string(16, '\0')), FormatError);
}

TEST(Orbt1, BadMagicAndHeader) {
    Gen g(35);
    std::string bytes = encode_tensor(random_tensor(g, 2, 5), identity_params());
    std::string bad = bytes;
    bad.replace(bad.find("ORBT1"), 5, "OVAE1");
    EXPECT_THROW(decode_tensor(bad), FormatError);
    EXPECT_THROW(decode_tensor("not json\n"), FormatError);
    EXPECT_THROW(decode_tensor(""), FormatError);
}

TEST(Orbt1, FileRoundTrip) {
    Gen g(36);
    const OrbitTensor t = random_tensor(g, 2, 9);
    const auto path = std::filesystem::temp_directory_path() / "orbitvae_test_dataset.orbt";
    save_tensor(t, identity_params(), path);
    EXPECT_EQ(load_tensor(path).first, t);
    std::filesystem::remove(path);
    EXPECT_THROW(load_tensor(path), FormatError);
}
