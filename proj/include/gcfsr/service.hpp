#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include "gcfsr/infer.hpp"

namespace gcfsr {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::size_t max_body = 4 << 20;
  std::string cors_origin;  // empty disables CORS headers
};

// HTTP front end over one immutable model snapshot:
//   GET  /health
//   POST /infer?s=S        PNG body -> PNG, header X-S-Effective
//   POST /sweep?s_min=A&s_max=B&steps=K   PNG body -> {"frames":[{s, s_effective, png_base64}]}
// Errors are JSON {"error": code}.
class Service {
 public:
  Service(std::shared_ptr<const SuperResolver> model, ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Returns the bound port; throws IoError when the address is unavailable.
  int bind();
  // Serves until stop(); bind() must have succeeded.
  void run();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = -1;
};

}  // namespace gcfsr
