// Minimal DNZ1 server that returns u unchanged (or shrunk toward zero).
// Useful as a loopback endpoint for `dgec denoise-test` and for wiring checks.
//
//   dnz_echo --stdio
//   dnz_echo --port 5555

#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "dgec/protocol.hpp"

int main(int argc, char** argv) {
  CLI::App app{"DNZ1 echo denoiser"};
  bool use_stdio = false;
  int port = 0;
  double scale = 1.0;
  std::size_t max_pixels = std::size_t{1} << 24;
  app.add_flag("--stdio", use_stdio, "Serve a single stream on stdin/stdout");
  app.add_option("--port", port, "TCP port on 127.0.0.1 (0 picks one and prints it)")->check(CLI::Range(0, 65535));
  app.add_option("--scale", scale, "Multiply u by this factor");
  app.add_option("--max-pixels", max_pixels, "Reject larger images with status 1");
  CLI11_PARSE(app, argc, argv);

  const dgec::DnzHandler handler = [scale](const dgec::DenoiseRequest& req) -> dgec::CVector { return scale * req.u; };
  dgec::ServeOptions opts;
  opts.max_pixels = max_pixels;
  try {
    if (use_stdio) {
      dgec::serve_dnz1(0, 1, handler, opts);
      return 0;
    }
    dgec::DnzTcpServer server(handler, static_cast<std::uint16_t>(port), "127.0.0.1", opts);
    std::cout << server.endpoint() << std::endl;
    for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
  } catch (const std::exception& e) {
    std::cerr << "dnz_echo: " << e.what() << "\n";
    return 1;
  }
}
