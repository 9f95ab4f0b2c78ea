#include "loadloop/service/service.hpp"

// after Eigen: resolv.h defines _res
#include <httplib.h>

namespace loadloop::service {

namespace {

void reply(httplib::Response& res, const Json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
    Json body{{"error", message}};
    if (!field.empty()) body["field"] = field;
    reply(res, body, status);
}

Json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return Json::object();
    try {
        return Json::parse(req.body);
    } catch (const Json::parse_error& e) {
        throw ValidationError(std::string("body is not valid JSON: ") + e.what(), "body");
    }
}

// Runs a handler and maps failures onto status codes.
template <class F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const NotFound& e) {
            fail(res, 404, e.what());
        } catch (const StageConflict& e) {
            fail(res, 409, e.what());
        } catch (const ValidationError& e) {
            fail(res, 422, e.what(), e.field());
        } catch (const dataset::DatasetError& e) {
            fail(res, 422, e.what(), "dataset");
        } catch (const Json::exception& e) {
            fail(res, 422, std::string("invalid payload: ") + e.what(), "body");
        } catch (const std::exception& e) {
            fail(res, 500, e.what());
        }
    };
}

std::string sse_frame(const Event& e) {
    return "id: " + std::to_string(e.seq) + "\nevent: " + e.kind + "\ndata: " + to_json(e).dump() + "\n\n";
}

}  // namespace

Server::Server(SessionManager& sessions) : sessions_(sessions), http_(std::make_unique<httplib::Server>()) { routes(); }

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
    if (port == 0) return http_->bind_to_any_port(host);
    if (!http_->bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void Server::listen() { http_->listen_after_bind(); }

void Server::stop() {
    if (http_ && http_->is_running()) http_->stop();
}

void Server::routes() {
    auto& h = *http_;
    auto session = [this](const httplib::Request& req) { return sessions_.get(req.matches[1]); };

    h.Post("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
               reply(res, sessions_.create()->describe(), 201);
           }));
    h.Get("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
              Json out = Json::array();
              for (const auto& id : sessions_.ids()) out.push_back(sessions_.get(id)->describe());
              reply(res, out);
          }));
    h.Get(R"(/sessions/([^/]+))", guarded([session](const httplib::Request& req, httplib::Response& res) {
              reply(res, session(req)->describe());
          }));
    h.Post(R"(/sessions/([^/]+)/dataset)", guarded([session](const httplib::Request& req, httplib::Response& res) {
               auto s = session(req);
               if (req.body.empty()) throw ValidationError("empty CSV body", "body");
               reply(res, s->upload_dataset(req.body));
           }));
    h.Put(R"(/sessions/([^/]+)/semantics)", guarded([session](const httplib::Request& req, httplib::Response& res) {
              auto s = session(req);
              reply(res, s->put_semantics(parse_body(req)));
          }));
    h.Put(R"(/sessions/([^/]+)/task)", guarded([session](const httplib::Request& req, httplib::Response& res) {
              auto s = session(req);
              reply(res, s->put_task(parse_body(req)));
          }));
    h.Post(R"(/sessions/([^/]+)/clean)", guarded([session](const httplib::Request& req, httplib::Response& res) {
               reply(res, session(req)->clean());
           }));
    h.Put(R"(/sessions/([^/]+)/metric)", guarded([session](const httplib::Request& req, httplib::Response& res) {
              auto s = session(req);
              reply(res, s->put_metric(parse_body(req)));
          }));
    h.Post(R"(/sessions/([^/]+)/optimize)", guarded([session](const httplib::Request& req, httplib::Response& res) {
               auto s = session(req);
               const Json b = parse_body(req);
               OptimizeRequest r;
               auto count = [&](const char* key, std::size_t& out) {
                   if (!b.contains(key)) return;
                   if (!b[key].is_number_unsigned()) throw ValidationError(std::string(key) + " must be a non-negative integer", key);
                   out = b[key].get<std::size_t>();
               };
               count("Tr", r.max_trials);
               count("K", r.init_samples);
               count("B", r.batch_size);
               count("workers", r.workers);
               if (b.contains("seed")) {
                   if (!b["seed"].is_number_unsigned()) throw ValidationError("seed must be a non-negative integer", "seed");
                   r.seed = b["seed"].get<std::uint64_t>();
               }
               const char* eps = b.contains("epsilon") ? "epsilon" : "ε";
               if (b.contains(eps) && !b[eps].is_null()) {
                   if (!b[eps].is_number()) throw ValidationError("epsilon must be a number", "epsilon");
                   r.epsilon = b[eps].get<double>();
               }
               reply(res, s->start_optimization(r), 202);
           }));
    h.Post(R"(/sessions/([^/]+)/guidance)", guarded([session](const httplib::Request& req, httplib::Response& res) {
               auto s = session(req);
               reply(res, s->guidance(parse_body(req)), 202);
           }));
    h.Get(R"(/sessions/([^/]+)/trials)", guarded([session](const httplib::Request& req, httplib::Response& res) {
              reply(res, session(req)->trials());
          }));
    h.Get(R"(/sessions/([^/]+)/summary)", guarded([session](const httplib::Request& req, httplib::Response& res) {
              reply(res, session(req)->summary());
          }));
    h.Get(R"(/sessions/([^/]+)/importance/([^/]+))",
          guarded([session](const httplib::Request& req, httplib::Response& res) {
              reply(res, session(req)->importance(req.matches[2]));
          }));
    h.Get(R"(/sessions/([^/]+)/best)", guarded([session](const httplib::Request& req, httplib::Response& res) {
              reply(res, session(req)->best());
          }));
    h.Post(R"(/sessions/([^/]+)/deploy)", guarded([session](const httplib::Request& req, httplib::Response& res) {
               auto s = session(req);
               reply(res, s->deploy(parse_body(req)));
           }));
    h.Post(R"(/sessions/([^/]+)/postprocess)", guarded([session](const httplib::Request& req, httplib::Response& res) {
               auto s = session(req);
               reply(res, s->postprocess(parse_body(req)));
           }));
    h.Get(R"(/sessions/([^/]+)/chat)", guarded([session](const httplib::Request& req, httplib::Response& res) {
              reply(res, session(req)->chat_log());
          }));
    h.Post(R"(/sessions/([^/]+)/chat)", guarded([session](const httplib::Request& req, httplib::Response& res) {
               auto s = session(req);
               const Json b = parse_body(req);
               if (!b.contains("text") || !b["text"].is_string()) throw ValidationError("text is required", "text");
               reply(res, s->chat_post(b["text"].get<std::string>()));
           }));
    h.Get(R"(/sessions/([^/]+)/tokens)", guarded([session](const httplib::Request& req, httplib::Response& res) {
              reply(res, session(req)->tokens());
          }));

    h.Get(R"(/sessions/([^/]+)/events)", guarded([session](const httplib::Request& req, httplib::Response& res) {
              auto s = session(req);
              std::uint64_t after = 0;
              const std::string last = req.has_header("Last-Event-ID") ? req.get_header_value("Last-Event-ID")
                                                                        : req.get_param_value("after");
              if (!last.empty()) {
                  try {
                      after = std::stoull(last);
                  } catch (const std::exception&) {
                      throw ValidationError("Last-Event-ID must be a sequence number", "Last-Event-ID");
                  }
              }
              const bool follow = req.get_param_value("follow") != "0";
              auto cursor = std::make_shared<std::uint64_t>(after);
              res.set_header("Cache-Control", "no-cache");
              res.set_chunked_content_provider("text/event-stream", [s, cursor, follow](std::size_t, httplib::DataSink& sink) {
                  const auto events = s->events().since(*cursor);
                  if (events.empty()) {
                      const auto st = s->stage();
                      const bool finished = st == SessionStage::done || st == SessionStage::failed;
                      if (!follow || (finished && s->events().last_seq() <= *cursor)) {
                          sink.done();
                          return true;
                      }
                      s->events().wait_for(*cursor, std::chrono::milliseconds(500));
                      return sink.is_writable();
                  }
                  for (const auto& e : events) {
                      const std::string frame = sse_frame(e);
                      if (!sink.write(frame.data(), frame.size())) return false;
                      *cursor = e.seq;
                  }
                  return true;
              });
          }));
}

}  // namespace loadloop::service
