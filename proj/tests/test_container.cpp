#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "crfnoise/container.hpp"
#include "test_util.hpp"

using namespace crfnoise;

TEST_CASE("container round trip preserves every block type") {
    Rng rng = Rng::from_key(601);
    std::string path = "/tmp/crfnoise_test_container.crfc";

    container::Writer w("testkind");
    w.meta()["note"] = 42;
    Vec v = testutil::random_vec(5, rng);
    Mat m = testutil::random_mat(3, 4, rng);
    std::vector<float> f{1.5f, -2.25f, 0.0f};
    std::vector<uint8_t> bits{0xAB, 0x01};
    std::vector<uint8_t> u8{7, 8, 9};
    std::vector<uint64_t> u64{1ull << 40, 2};
    w.add_vec("v", v);
    w.add_mat("m", m);
    w.add_f32("f", f);
    w.add_bits("bits", bits, 10);
    w.add_u8("u8", u8);
    w.add_u64("u64", u64);
    w.add_text("t", "hello\nworld");
    w.write(path);

    container::Reader r(path);
    CHECK(r.kind() == "testkind");
    CHECK(r.meta().at("note") == 42);
    CHECK((r.read_vec("v") - v).cwiseAbs().maxCoeff() == 0.0);
    Mat mb = r.read_mat("m");
    CHECK(mb.rows() == 3);
    CHECK(mb.cols() == 4);
    CHECK((mb - m).cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.read_f32("f") == f);
    uint64_t logical = 0;
    CHECK(r.read_bits("bits", &logical) == bits);
    CHECK(logical == 10);
    CHECK(r.read_u8("u8") == u8);
    CHECK(r.read_u64("u64") == u64);
    CHECK(r.read_text("t") == "hello\nworld");
    std::remove(path.c_str());
}

TEST_CASE("identical content writes identical bytes") {
    auto write_one = [](const std::string& path) {
        container::Writer w("k");
        w.meta()["s"] = 3;
        Vec v(2);
        v << 1.0, 2.0;
        w.add_vec("v", v);
        w.write(path);
    };
    write_one("/tmp/crfnoise_c1.crfc");
    write_one("/tmp/crfnoise_c2.crfc");
    std::ifstream a("/tmp/crfnoise_c1.crfc", std::ios::binary);
    std::ifstream b("/tmp/crfnoise_c2.crfc", std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    CHECK(!sa.empty());
    std::remove("/tmp/crfnoise_c1.crfc");
    std::remove("/tmp/crfnoise_c2.crfc");
}

TEST_CASE("corruption is rejected") {
    std::string path = "/tmp/crfnoise_test_corrupt.crfc";
    container::Writer w("k");
    Vec v(4);
    v << 1.0, 2.0, 3.0, 4.0;
    w.add_vec("v", v);
    w.write(path);

    // flip one payload byte
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(0, std::ios::end);
    auto size = static_cast<long>(f.tellg());
    f.seekp(size - 5);
    char c;
    f.seekg(size - 5);
    f.read(&c, 1);
    c ^= 0x40;
    f.seekp(size - 5);
    f.write(&c, 1);
    f.close();
    CHECK_THROWS(container::Reader(path));

    // bad magic
    std::ofstream g(path, std::ios::binary | std::ios::trunc);
    g << "NOPEgarbage";
    g.close();
    CHECK_THROWS(container::Reader(path));
    std::remove(path.c_str());
}

TEST_CASE("missing blocks and dtype mismatches are errors") {
    std::string path = "/tmp/crfnoise_test_missing.crfc";
    container::Writer w("k");
    w.add_text("only_text", "x");
    w.write(path);
    container::Reader r(path);
    CHECK_THROWS(r.read_vec("absent"));
    CHECK_THROWS(r.read_vec("only_text"));
    std::remove(path.c_str());
}
