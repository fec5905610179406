#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "mair/data.hpp"
#include "mair/image_io.hpp"
#include "mair/net.hpp"

using namespace mair;

namespace {

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("ppm round trip is bit-identical", "[io]") {
  auto img = synth_images<float>(1, 20, 24, 314)[0];
  const std::string p1 = tmp_path("mair_io_a.ppm");
  const std::string p2 = tmp_path("mair_io_b.ppm");
  write_pnm(img, p1);
  Tensor<float> back = read_pnm<float>(p1);
  REQUIRE(back.shape == img.shape);
  write_pnm(back, p2);
  REQUIRE(slurp(p1) == slurp(p2));
  // quantization bound: one write+read stays within half a step of /255
  for (std::size_t i = 0; i < img.numel(); ++i)
    REQUIRE(std::abs(back.data[i] - img.data[i]) <= 0.5f / 255.0f + 1e-6f);
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("pgm single channel", "[io]") {
  Tensor<float> g({1, 5, 7});
  for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] = static_cast<float>(i) / 34.0f;
  const std::string p = tmp_path("mair_io_g.pgm");
  write_pnm(g, p);
  Tensor<float> back = read_pnm<float>(p);
  REQUIRE(back.shape == std::vector<int>{1, 5, 7});
  write_pnm(back, p);
  Tensor<float> again = read_pnm<float>(p);
  REQUIRE(back.data == again.data);
  std::filesystem::remove(p);
}

TEST_CASE("values clamp and round on write", "[io]") {
  Tensor<float> img({1, 1, 3}, {-0.2f, 0.5f, 1.7f});
  const std::string p = tmp_path("mair_io_c.pgm");
  write_pnm(img, p);
  Tensor<float> back = read_pnm<float>(p);
  REQUIRE(back.data[0] == 0.0f);
  REQUIRE(back.data[1] == Catch::Approx(128.0 / 255.0));  // 0.5·255 = 127.5 rounds to 128
  REQUIRE(back.data[2] == 1.0f);
  std::filesystem::remove(p);
}

TEST_CASE("restoring through an all-zero model leaves the image file unchanged", "[io]") {
  // the chain behind `restore`: read → model (restore head) → clamp → write
  auto img = synth_images<float>(1, 18, 22, 555)[0];
  const std::string in_path = tmp_path("mair_io_rt_in.ppm");
  const std::string out_path = tmp_path("mair_io_rt_out.ppm");
  write_pnm(img, in_path);

  ModelConfig c;
  c.channels = 8;
  c.n_groups = 1;
  c.n_blocks = 1;
  c.ssm_state = 2;
  Model<float> m = build_model<float>(c, 1);
  m.zero_all();
  Tensor<float> loaded = read_pnm<float>(in_path);
  write_pnm(clamp01(infer(m, loaded)), out_path);
  REQUIRE(slurp(in_path) == slurp(out_path));
  std::filesystem::remove(in_path);
  std::filesystem::remove(out_path);
}

TEST_CASE("header parsing and errors", "[io]") {
  const std::string p = tmp_path("mair_io_h.pgm");
  {
    std::ofstream f(p, std::ios::binary);
    f << "P5\n# a comment line\n2 2\n255\n";
    f.write("\x01\x02\x03\x04", 4);
  }
  Tensor<float> t = read_pnm<float>(p);
  REQUIRE(t.shape == std::vector<int>{1, 2, 2});
  REQUIRE(t.data[3] == Catch::Approx(4.0 / 255.0));

  {
    std::ofstream f(p, std::ios::binary);
    f << "P5\n2 2\n65535\n";
    f.write("\0\1\0\2\0\3\0\4", 8);
  }
  REQUIRE_THROWS_WITH(read_pnm<float>(p), Catch::Matchers::ContainsSubstring("maxval"));

  {
    std::ofstream f(p, std::ios::binary);
    f << "P3\n2 2\n255\n1 2 3";
  }
  REQUIRE_THROWS_AS(read_pnm<float>(p), std::runtime_error);

  {
    std::ofstream f(p, std::ios::binary);
    f << "P5\n4 4\n255\n";
    f.write("\x01\x02", 2);  // truncated
  }
  REQUIRE_THROWS_WITH(read_pnm<float>(p), Catch::Matchers::ContainsSubstring("truncated"));
  std::filesystem::remove(p);
}
