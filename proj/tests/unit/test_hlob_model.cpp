#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hloblab/hlob_model.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

using namespace hloblab;
using namespace hloblab::model;

namespace {

std::size_t conv_params(std::size_t out, std::size_t in, std::size_t kh, std::size_t kw) {
    return out * in * kh * kw + out;
}

model::HlobConfig small_config() {
    HlobConfig c;
    c.window = 8;
    c.channels = 4;
    c.lstm_hidden = 5;
    return c;
}

nn::Tensor<double> heads_input(std::size_t n, std::size_t t, std::size_t width, double phase) {
    std::vector<double> v(n * t * width);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = std::sin(phase + 0.37 * static_cast<double>(i));
    }
    return nn::Tensor<double>({n, 1, t, width}, std::move(v));
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("parameter counts follow the layer geometry") {
    const HlobModel<float> m(HlobConfig{}, 1);
    std::size_t expected = 0;
    std::map<std::string, std::size_t> oracle;
    const std::size_t C = 32;
    const std::array<std::size_t, 3> arity{4, 3, 2};
    const std::array<std::size_t, 3> omega{17, 52, 54};
    for (std::size_t h = 0; h < 3; ++h) {
        const std::string base = std::string("head.") + kHeadNames[h];
        oracle[base + ".conv_pv"] = conv_params(C, 1, 1, 2);
        oracle[base + ".block2"] = conv_params(C, C, 1, arity[h]) + 2 * conv_params(C, C, 4, 1);
        oracle[base + ".conv3"] = conv_params(C, C, 1, omega[h]);
    }
    oracle["lstm"] = 4 * 32 * (96 + 32) + 2 * 4 * 32;
    oracle["out"] = 32 * 3 + 3;
    for (const auto& [name, count] : oracle) {
        expected += count;
    }
    CHECK(m.parameter_count() == expected);
    CHECK(m.parameter_count() == 177155);
    const auto table = m.component_table();
    REQUIRE(table.size() == oracle.size());
    for (const auto& row : table) {
        INFO(row.name);
        CHECK(oracle.at(row.name) == row.parameters);
    }
    std::size_t layers = 0;
    for (const auto& row : m.layer_table()) {
        layers += row.parameters;
    }
    CHECK(layers == expected);
}

TEST_CASE("forward shapes at the default geometry") {
    const HlobModel<float> m(HlobConfig{}, 2);
    std::array<nn::Tensor<float>, 3> heads;
    for (std::size_t h = 0; h < 3; ++h) {
        heads[h] = nn::Tensor<float>({1, 1, 100, m.config().widths[h]}, 0.1f);
    }
    std::vector<ShapeProbe> probes;
    const auto logits = m.forward(heads, nn::Mode::Eval, nullptr, &probes);
    CHECK(logits.shape() == nn::Shape{1, 3});
    std::map<std::string, nn::Shape> by_name;
    for (const auto& p : probes) {
        by_name[p.name] = p.shape;
    }
    CHECK(by_name.at("head.tetra.conv_pv") == nn::Shape{1, 32, 100, 68});
    CHECK(by_name.at("head.tetra.block2.conv_simplex") == nn::Shape{1, 32, 100, 17});
    CHECK(by_name.at("head.tetra.block2.conv_time2") == nn::Shape{1, 32, 100, 17});
    CHECK(by_name.at("head.tetra.conv3") == nn::Shape{1, 32, 100, 1});
    CHECK(by_name.at("head.tri.conv_pv") == nn::Shape{1, 32, 100, 156});
    CHECK(by_name.at("head.tri.block2.conv_simplex") == nn::Shape{1, 32, 100, 52});
    CHECK(by_name.at("head.edge.block2.conv_simplex") == nn::Shape{1, 32, 100, 54});
    CHECK(by_name.at("head.edge.sequence") == nn::Shape{1, 100, 32});
    CHECK(by_name.at("concat") == nn::Shape{1, 100, 96});
    CHECK(by_name.at("lstm.h_n") == nn::Shape{1, 32});
}

TEST_CASE("initialization is seeded and fan-in bounded") {
    const HlobModel<double> a(small_config(), 9);
    const HlobModel<double> b(small_config(), 9);
    const HlobModel<double> c(small_config(), 10);
    bool differs = false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        const auto& pa = a.parameters()[i].tensor;
        const auto& pb = b.parameters()[i].tensor;
        const auto& pc = c.parameters()[i].tensor;
        CHECK(std::equal(pa.data().begin(), pa.data().end(), pb.data().begin()));
        differs = differs || !std::equal(pa.data().begin(), pa.data().end(), pc.data().begin());
        const auto& name = a.parameters()[i].name;
        std::size_t fan_in = 0;
        if (name == "lstm.weight_ih" || name == "lstm.bias_ih") {
            fan_in = 3 * small_config().channels;
        } else if (name == "lstm.weight_hh" || name == "lstm.bias_hh") {
            fan_in = small_config().lstm_hidden;
        } else if (name.starts_with("out.")) {
            fan_in = small_config().lstm_hidden;
        } else {
            const auto& w = name.ends_with(".bias") ? a.parameters()[i - 1].tensor : pa;
            fan_in = w.numel() / w.dim(0);
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double v : pa.data()) {
            INFO(name);
            CHECK(std::abs(v) <= bound);
        }
    }
    CHECK(differs);
}

TEST_CASE("forward validates inputs and modes") {
    const HlobModel<double> m(small_config(), 3);
    const auto& cfg = m.config();
    std::array<nn::Tensor<double>, 3> heads{heads_input(2, 8, cfg.widths[0], 0.0), heads_input(2, 8, cfg.widths[1], 1.0),
                                            heads_input(2, 8, cfg.widths[2], 2.0)};
    const auto e1 = m.forward(heads, nn::Mode::Eval);
    const auto e2 = m.forward(heads, nn::Mode::Eval);
    CHECK(std::equal(e1.data().begin(), e1.data().end(), e2.data().begin()));
    CHECK_THROWS_AS(m.forward(heads, nn::Mode::Train), Error);
    std::mt19937_64 rng(1);
    const auto t = m.forward(heads, nn::Mode::Train, &rng);
    CHECK(t.shape() == nn::Shape{2, 3});

    auto wrong = heads;
    wrong[1] = heads_input(2, 8, cfg.widths[1] - 2, 0.0);
    try {
        m.forward(wrong, nn::Mode::Eval);
        FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ShapeMismatch);
    }
}

TEST_CASE("config geometry must agree") {
    HlobConfig c;
    CHECK_NOTHROW(c.validate());
    c.widths[1] = 300;
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK(HlobConfig{}.digest() == HlobConfig{}.digest());
    CHECK(HlobConfig{}.digest() != small_config().digest());
}

TEST_CASE("probabilities from logits") {
    const std::vector<double> logits{0.0, 0.0, 0.0, 1.0, 2.0, 3.0};
    const auto p = predict_proba(logits);
    CHECK(p[0] == doctest::Approx(1.0 / 3.0));
    CHECK(p[5] == doctest::Approx(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0))));
    const std::vector<double> bad{0.0, NAN, 1.0};
    CHECK_THROWS_AS(predict_proba(bad), Error);
}

TEST_CASE("checkpoint round trip restores parameters and moments") {
    HlobModel<double> m(small_config(), 4);
    m.parameters()[3].first_moment[0] = 0.25;
    m.parameters()[5].second_moment[1] = 0.5;
    const auto path = temp_file("hloblab_ckpt_rt.bin");
    save_checkpoint(m, path, CheckpointMeta{4, 0xabcdef, 17});
    const auto loaded = load_checkpoint<double>(path, small_config());
    CHECK(loaded.meta.seed == 4);
    CHECK(loaded.meta.run_digest == 0xabcdef);
    CHECK(loaded.meta.optimizer_step == 17);
    REQUIRE(loaded.model.parameters().size() == m.parameters().size());
    for (std::size_t i = 0; i < m.parameters().size(); ++i) {
        const auto& a = m.parameters()[i];
        const auto& b = loaded.model.parameters()[i];
        CHECK(a.name == b.name);
        CHECK(std::equal(a.tensor.data().begin(), a.tensor.data().end(), b.tensor.data().begin()));
        CHECK(a.first_moment == b.first_moment);
        CHECK(a.second_moment == b.second_moment);
    }

    CHECK_THROWS_AS(load_checkpoint<float>(path, small_config()), Error);
    auto other = small_config();
    other.channels = 6;
    try {
        load_checkpoint<double>(path, other);
        FAIL("expected DigestMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DigestMismatch);
    }
    std::filesystem::remove(path);
}

TEST_CASE("damaged checkpoints are rejected") {
    const HlobModel<float> m(small_config(), 5);
    const auto path = temp_file("hloblab_ckpt_bad.bin");
    save_checkpoint(m, path, CheckpointMeta{});
    const auto size = std::filesystem::file_size(path);

    SUBCASE("truncated") {
        std::filesystem::resize_file(path, size - 13);
        try {
            load_checkpoint<float>(path, small_config());
            FAIL("expected IoFailure");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::IoFailure);
        }
    }
    SUBCASE("flipped byte") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(static_cast<std::streamoff>(size / 2));
        char c = 0;
        f.read(&c, 1);
        f.seekp(static_cast<std::streamoff>(size / 2));
        c = static_cast<char>(c ^ 0x40);
        f.write(&c, 1);
        f.close();
        try {
            load_checkpoint<float>(path, small_config());
            FAIL("expected IoFailure");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::IoFailure);
        }
    }
    SUBCASE("missing") {
        std::filesystem::remove(path);
        CHECK_THROWS_AS(load_checkpoint<float>(path, small_config()), Error);
    }
    std::filesystem::remove(path);
}
