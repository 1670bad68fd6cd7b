#include "gcfsr/service.hpp"

#include <charconv>
#include <cmath>

#include <httplib.h>
#include <json.hpp>

#include "gcfsr/errors.hpp"
#include "gcfsr/log.hpp"

namespace gcfsr {

namespace {

using json = nlohmann::json;

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <class T>
bool parse_strict(const std::string& text, T& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(out)) return false;
  return ec == std::errc() && ptr == end && !text.empty();
}

void send_error(httplib::Response& res, int status, const std::string& code) {
  res.status = status;
  res.set_content(json{{"error", code}}.dump(), "application/json");
}

// The PNG body decoded and checked against the model's accepted sizes; on
// failure the response is already filled in.
bool read_image(const SuperResolver& model, const httplib::Request& req, httplib::Response& res, Image& out) {
  Image img;
  try {
    img = decode_png({reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size()});
  } catch (const ImageError&) {
    send_error(res, 400, "decode");
    return false;
  }
  if (!img.square()) {
    send_error(res, 422, "not_square");
    return false;
  }
  try {
    out = model.prepare(img);
  } catch (const InvalidArgument&) {
    send_error(res, 422, "unsupported_size");
    return false;
  }
  return true;
}

bool query_real(const httplib::Request& req, const char* key, double fallback, double& out) {
  if (!req.has_param(key)) {
    out = fallback;
    return true;
  }
  return parse_strict(req.get_param_value(key), out);
}

}  // namespace

struct Service::Impl {
  std::shared_ptr<const SuperResolver> model;
  ServiceOptions options;
  httplib::Server server;
};

Service::Service(std::shared_ptr<const SuperResolver> model, ServiceOptions options)
    : impl_(std::make_unique<Impl>()) {
  impl_->model = std::move(model);
  impl_->options = std::move(options);
  auto& svr = impl_->server;
  const SuperResolver& m = *impl_->model;
  const ServiceOptions& opt = impl_->options;

  svr.set_payload_max_length(opt.max_body);
  // Port reuse would let a second server silently share the port; keep only
  // address reuse so restarts are quick and conflicts fail to bind.
  svr.set_socket_options([](auto sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
  });

  svr.Get("/health", [&m, &opt](const httplib::Request&, httplib::Response& res) {
    const auto& c = m.config();
    json body = {{"status", "ok"}, {"u", c.u},          {"s_min", c.s_min()},          {"s_max", c.s_max()},
                 {"side", c.side()}, {"factors", c.factors}, {"max_body", opt.max_body}};
    res.set_content(body.dump(), "application/json");
  });

  svr.Post("/infer", [&m](const httplib::Request& req, httplib::Response& res) {
    double s = 0;
    if (!req.has_param("s") || !parse_strict(req.get_param_value("s"), s)) return send_error(res, 400, "invalid_s");
    Image x;
    if (!read_image(m, req, res, x)) return;
    const auto r = m.infer_prepared(x, s);
    const auto png = encode_png(r.image);
    res.set_header("X-S-Effective", format_real(r.s_effective));
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  });

  svr.Post("/sweep", [&m](const httplib::Request& req, httplib::Response& res) {
    const auto& c = m.config();
    double a = 0, b = 0;
    int steps = 0;
    if (!query_real(req, "s_min", c.s_min(), a) || !query_real(req, "s_max", c.s_max(), b) || !(a > 0) || !(b > 0))
      return send_error(res, 400, "invalid_range");
    if (!req.has_param("steps") || !parse_strict(req.get_param_value("steps"), steps) || steps < 2 || steps > 33)
      return send_error(res, 400, "invalid_steps");
    Image x;
    if (!read_image(m, req, res, x)) return;
    json frames = json::array();
    for (double s : log_sweep(a, b, steps)) {
      const auto r = m.infer_prepared(x, s);
      const auto png = encode_png(r.image);
      frames.push_back({{"s", s},
                        {"s_effective", r.s_effective},
                        {"png_base64", httplib::detail::base64_encode(std::string(png.begin(), png.end()))}});
    }
    res.set_content(json{{"frames", frames}}.dump(), "application/json");
  });

  if (!opt.cors_origin.empty()) {
    svr.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    svr.set_post_routing_handler([&opt](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", opt.cors_origin);
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Expose-Headers", "X-S-Effective");
    });
  }

  // Anything the routes did not answer themselves (404, 413 from the body
  // limit) still gets a JSON error body.
  svr.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const char* code = res.status == 404 ? "not_found" : res.status == 413 ? "too_large" : "bad_request";
    res.set_content(json{{"error", code}}.dump(), "application/json");
  });
  svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      warn(std::string("request failed: ") + e.what());
    } catch (...) {
    }
    send_error(res, 500, what);
  });
}

Service::~Service() = default;

int Service::bind() {
  auto& opt = impl_->options;
  if (opt.port == 0)
    port_ = impl_->server.bind_to_any_port(opt.host);
  else
    port_ = impl_->server.bind_to_port(opt.host, opt.port) ? opt.port : -1;
  if (port_ < 0) throw IoError("cannot bind " + opt.host + ":" + std::to_string(opt.port));
  return port_;
}

void Service::run() {
  if (port_ < 0) throw InvalidArgument("Service::run before bind");
  impl_->server.listen_after_bind();
}

void Service::stop() { impl_->server.stop(); }

}  // namespace gcfsr
