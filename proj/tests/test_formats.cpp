#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ssr/checkpoint.hpp"
#include "ssr/config.hpp"
#include "ssr/instances.hpp"
#include "ssr/pgm.hpp"
#include "ssr/ssr1.hpp"

using namespace ssr;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "ssr_format_tests";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST(Ssr1, RoundTripIsBitExact) {
    SplitMix64 rng(3);
    const DenseMatrix m = random_gaussian_matrix(5, 7, rng);
    const fs::path p = temp_dir() / "m.ssr1";
    write_ssr1(p, m);
    const DenseMatrix back = read_ssr1(p);
    EXPECT_EQ(back.rows, m.rows);
    EXPECT_EQ(back.cols, m.cols);
    EXPECT_EQ(back.data, m.data);
}

TEST(Ssr1, HeaderLayoutIsExact) {
    DenseMatrix m(1, 2);
    m(0, 0) = 1.0;
    m(0, 1) = -2.0;
    const std::string bytes = encode_ssr1(m);
    ASSERT_EQ(bytes.size(), 20 + 16);
    EXPECT_EQ(bytes.substr(0, 4), "SSR1");
    EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);  // rows LE
    EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 2); // cols LE
    // 1.0 as little-endian IEEE-754: 00 00 00 00 00 00 f0 3f
    EXPECT_EQ(static_cast<unsigned char>(bytes[26]), 0xF0);
    EXPECT_EQ(static_cast<unsigned char>(bytes[27]), 0x3F);
}

TEST(Ssr1, RejectsCorruptInput) {
    const fs::path p = temp_dir() / "bad.ssr1";
    write_file_atomic(p, "SSRX garbage");
    EXPECT_THROW(read_ssr1(p), IoError);
    write_file_atomic(p, std::string("SSR1") + std::string(8, '\0'));
    EXPECT_THROW(read_ssr1(p), IoError);
}

TEST(Checkpoint, RoundTripTied) {
    const SistaParams p = random_sista_params(6, 3, 17);
    const TrainableParams tp = TiedSistaNet{p, 4};
    const fs::path path = temp_dir() / "tied.ckpt";
    write_checkpoint(path, to_checkpoint(tp));
    const TrainableParams back = from_checkpoint(read_checkpoint(path));
    const auto& t = std::get<TiedSistaNet>(back);
    EXPECT_EQ(t.k, 4u);
    EXPECT_EQ(t.params.A.data, p.A.data);
    EXPECT_EQ(t.params.D.data, p.D.data);
    EXPECT_EQ(t.params.F.data, p.F.data);
    EXPECT_EQ(t.params.h0, p.h0);
    EXPECT_EQ(t.params.alpha, p.alpha);  // hex-encoded scalars are exact
    EXPECT_EQ(t.params.lambda1, p.lambda1);
    EXPECT_EQ(t.params.lambda2, p.lambda2);
}

TEST(Checkpoint, RoundTripGenericAndUntied) {
    const SistaParams base = random_sista_params(5, 2, 3);
    TrainConfig cfg;
    cfg.mode = TrainMode::generic;
    cfg.init = InitScheme::random;
    cfg.k_layers = 3;
    cfg.seed = 5;
    const TrainableParams gen = init_params(cfg, 5, 2, std::nullopt);
    const fs::path pg = temp_dir() / "gen.ckpt";
    write_checkpoint(pg, to_checkpoint(gen));
    const auto& g0 = std::get<StackedRnnParams>(gen);
    const auto g1 = std::get<StackedRnnParams>(from_checkpoint(read_checkpoint(pg)));
    EXPECT_EQ(g1.connectivity, Connectivity::generic);
    EXPECT_EQ(g1.W[2].data, g0.W[2].data);
    EXPECT_EQ(g1.U.data, g0.U.data);
    EXPECT_EQ(g1.h0.size(), 3u);

    cfg.mode = TrainMode::untied_sista;
    cfg.init = InitScheme::sista;
    const TrainableParams unt = init_params(cfg, 5, 2, base);
    const fs::path pu = temp_dir() / "unt.ckpt";
    write_checkpoint(pu, to_checkpoint(unt));
    const auto u1 = std::get<UntiedSistaParams>(from_checkpoint(read_checkpoint(pu)));
    EXPECT_EQ(u1.layers.size(), 3u);
    EXPECT_EQ(u1.layers[1].D.data, base.D.data);
    EXPECT_EQ(u1.layers[2].lambda2, base.lambda2);
}

TEST(Config, ParsesKeysCommentsAndTypes) {
    const fs::path p = temp_dir() / "run.cfg";
    write_file_atomic(p,
                      "# a comment\n"
                      "m = 8\n"
                      "lr = 1e-3   # trailing comment\n"
                      "name = hello\n"
                      "flag = true\n"
                      "\n");
    const RunConfig cfg = parse_config(p);
    EXPECT_EQ(cfg.get_size("m"), 8u);
    EXPECT_DOUBLE_EQ(cfg.get_double("lr"), 1e-3);
    EXPECT_EQ(cfg.get_str("name"), "hello");
    EXPECT_TRUE(cfg.get_bool_or("flag", false));
    EXPECT_EQ(cfg.get_size_or("absent", 7u), 7u);
    EXPECT_THROW(cfg.get_str("absent"), ConfigError);
    EXPECT_THROW(cfg.require_known({"m", "lr", "name"}), ConfigError);  // flag unknown
    cfg.require_known({"m", "lr", "name", "flag"});
}

TEST(Config, RejectsMalformedLines) {
    const fs::path p = temp_dir() / "bad.cfg";
    write_file_atomic(p, "novalue\n");
    EXPECT_THROW(parse_config(p), ConfigError);
    write_file_atomic(p, "a = 1\na = 2\n");
    EXPECT_THROW(parse_config(p), ConfigError);
    EXPECT_THROW(parse_config(temp_dir() / "missing.cfg"), ConfigError);
}

TEST(Pgm, ReadsAndDownsamples) {
    // 4x4 checkerboard of 0 and 255, maxval 255.
    std::string bytes = "P5\n# test image\n4 4\n255\n";
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) bytes.push_back(((r + c) % 2) ? char(255) : char(0));
    const fs::path p = temp_dir() / "img.pgm";
    write_file_atomic(p, bytes);

    const SequenceSample full = load_image_columns(p, 4);
    ASSERT_EQ(full.y_seq.size(), 4u);
    EXPECT_DOUBLE_EQ(full.y_seq[1][0], 1.0);  // column 1, row 0 = 255
    EXPECT_DOUBLE_EQ(full.y_seq[0][0], 0.0);

    const SequenceSample down = load_image_columns(p, 2);
    ASSERT_EQ(down.y_seq.size(), 2u);
    for (const auto& col : down.y_seq)
        for (double v : col) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Pgm, ConstantImageGivesIdenticalColumns) {
    std::string bytes = "P5 6 6 200 ";
    bytes.back() = '\n';
    for (int i = 0; i < 36; ++i) bytes.push_back(char(100));
    const fs::path p = temp_dir() / "gray.pgm";
    write_file_atomic(p, bytes);
    const SequenceSample s = load_image_columns(p, 6);
    for (const auto& col : s.y_seq) EXPECT_EQ(col, s.y_seq[0]);
    EXPECT_DOUBLE_EQ(s.y_seq[0][0], 0.5);
}

TEST(Pgm, TargetLargerThanImageThrows) {
    std::string bytes = "P5\n2 2\n255\n";
    for (int i = 0; i < 4; ++i) bytes.push_back(char(9));
    const fs::path p = temp_dir() / "tiny.pgm";
    write_file_atomic(p, bytes);
    EXPECT_THROW(load_image_columns(p, 4), std::invalid_argument);
}

TEST(Pgm, MalformedFilesCarryByteOffset) {
    const fs::path p = temp_dir() / "bad.pgm";
    write_file_atomic(p, "P6\n4 4\n255\n");
    try {
        read_pgm(p);
        FAIL() << "expected PgmError";
    } catch (const PgmError& e) {
        EXPECT_EQ(e.offset, 0u);
    }
    write_file_atomic(p, "P5\n4 4\n255\nxx");  // truncated pixels
    try {
        read_pgm(p);
        FAIL() << "expected PgmError";
    } catch (const PgmError& e) {
        EXPECT_GT(e.offset, 0u);
    }
}
