#include <gtest/gtest.h>

#include <filesystem>
#include <sys/socket.h>

#include "dgec/commands.hpp"
#include "dgec/protocol.hpp"

using namespace dgec;

namespace {

const std::filesystem::path kFixtures = DGEC_FIXTURE_DIR;

DenoiseRequest golden_request() {
  DenoiseRequest r;
  r.height = 2;
  r.width = 2;
  r.gammas = {1.5, 4.0};
  r.u = CVector(4);
  r.u << cplx(1, 2), cplx(-3, 0.5), cplx(0.25, -1), cplx(8, 0);
  CVector n(4);
  n << cplx(0.125, 0), cplx(0, -0.5), cplx(2, 2), cplx(-1, 1);
  r.noise = {n};
  return r;
}

const DnzHandler kEcho = [](const DenoiseRequest& r) { return r.u; };

}  // namespace

TEST(Dnz1, RequestMatchesGoldenBytes) {
  EXPECT_EQ(encode_request(golden_request()), read_bytes(kFixtures / "dnz1_request.bin"));
  const DenoiseRequest back = decode_request(read_bytes(kFixtures / "dnz1_request.bin"));
  EXPECT_EQ(back.gammas, golden_request().gammas);
  EXPECT_EQ((back.u - golden_request().u).norm(), 0.0);
  ASSERT_EQ(back.noise.size(), 1u);
}

TEST(Dnz1, ResponsesMatchGoldenBytes) {
  const CVector u = golden_request().u;
  EXPECT_EQ(encode_response(DnzStatus::kOk, &u), read_bytes(kFixtures / "dnz1_response_echo.bin"));
  EXPECT_EQ(encode_response(DnzStatus::kShapeError), read_bytes(kFixtures / "dnz1_response_shape.bin"));
}

TEST(Dnz1, HeaderFields) {
  const auto bytes = read_bytes(kFixtures / "dnz1_request.bin");
  const DnzHeader h = decode_header(bytes.data(), bytes.size());
  EXPECT_TRUE(h.magic_ok());
  EXPECT_EQ(h.op, kDnzOpDenoise);
  EXPECT_EQ(h.k, 1);
  EXPECT_EQ(h.l, 2);
  EXPECT_EQ(kDnzHeaderSize + h.body_size(), bytes.size());
}

TEST(Dnz1, DecodeRejectsMalformed) {
  auto bytes = read_bytes(kFixtures / "dnz1_request.bin");
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_request(truncated), ProtocolError);
  auto bad_op = bytes;
  bad_op[4] = 2;
  EXPECT_THROW(decode_request(bad_op), ProtocolError);
}

TEST(Dnz1, ServerAnswersGoldenFrameOverSocketPair) {
  int sv[2];
  ASSERT_EQ(::socketpair(AF_UNIX, SOCK_STREAM, 0, sv), 0);
  std::thread server([&] {
    serve_dnz1(sv[1], sv[1], kEcho);
    ::close(sv[1]);
  });
  const auto frame = read_bytes(kFixtures / "dnz1_request.bin");
  detail::write_all(sv[0], frame.data(), frame.size());
  const auto expect = read_bytes(kFixtures / "dnz1_response_echo.bin");
  std::vector<std::uint8_t> got(expect.size());
  ASSERT_TRUE(detail::read_exact(sv[0], got.data(), got.size(), 5000));
  EXPECT_EQ(got, expect);
  ::shutdown(sv[0], SHUT_WR);
  server.join();
  ::close(sv[0]);
}

TEST(Dnz1, TcpServerSurvivesMalformedFrames) {
  DnzTcpServer server(kEcho);
  const ConformanceReport rep = cmd_denoise_test(server.endpoint());
  for (const auto& c : rep.checks) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
  EXPECT_EQ(rep.checks.size(), 5u);
  EXPECT_EQ(server.frames_answered(), 5u);
}

TEST(Dnz1, ConformanceFlagsABrokenServer) {
  const DnzHandler broken = [](const DenoiseRequest& r) -> CVector { return CVector::Zero(r.u.size() + 1); };
  DnzTcpServer server(broken);
  const ConformanceReport rep = cmd_denoise_test(server.endpoint());
  EXPECT_FALSE(rep.passed());
  EXPECT_FALSE(rep.checks.front().passed);
}

TEST(Dnz1, ClientMapsStatusCodes) {
  const DnzHandler shape = [](const DenoiseRequest&) -> CVector { throw ShapeError("no"); };
  const DnzHandler internal = [](const DenoiseRequest&) -> CVector { throw std::runtime_error("boom"); };
  DnzTcpServer s1(shape), s2(internal);
  DenoiserClient c1(Endpoint::parse(s1.endpoint()), 5000), c2(Endpoint::parse(s2.endpoint()), 5000);
  EXPECT_THROW(c1.denoise(golden_request()), RemoteShapeError);
  EXPECT_THROW(c2.denoise(golden_request()), RemoteInternalError);
}

TEST(Dnz1, ClientRoundTripWithStdioChild) {
  // A shell child that answers every frame with a fixed shape error.
  DenoiserClient client(Endpoint::parse("stdio:head -c 96 >/dev/null; printf 'DNZ1\\001'"), 5000);
  EXPECT_THROW(client.denoise(golden_request()), RemoteShapeError);
}

TEST(Dnz1, ConnectionFailuresAreTransportErrors) {
  int port = 0;
  {
    DnzTcpServer tmp(kEcho);
    port = tmp.port();
    tmp.stop();
  }
  EXPECT_THROW(DenoiserClient(Endpoint::parse("127.0.0.1:" + std::to_string(port)), 1000), TransportError);
  EXPECT_THROW(Endpoint::parse("nocolon"), ArgumentError);
  EXPECT_THROW(Endpoint::parse("stdio:"), ArgumentError);
}

TEST(Dnz1, ExternalDenoiserThroughWaveletWrapper) {
  DnzTcpServer server([](const DenoiseRequest& r) { return CVector(0.5 * r.u); });
  auto client = std::make_shared<DenoiserClient>(Endpoint::parse(server.endpoint()), 5000);
  const WaveletDenoiser f = wrap_pixel_denoiser(external_pixel_denoiser(client, 2));
  const SubbandLayout lay(16, 16, 2);
  Rng rng(1);
  const WaveletPyramid r(lay, complex_gaussian(256, 1.0, rng));
  const DenoiserResult out = f(r, PrecisionVector::constant(lay, 4.0), 9);
  // float32 transport: agreement to single precision.
  EXPECT_LE((out.estimate.coeffs - 0.5 * r.coeffs).norm(), 1e-6 * r.coeffs.norm());
}
