#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "audit.hpp"
#include "emit.hpp"
#include "errors.hpp"
#include "image_io.hpp"

namespace wspd {

// Audit sessions persisted as one JSON file each under `dir`. All mutations
// are serialized by a single mutex and hit disk before they return.
class SessionStore {
 public:
  SessionStore(std::filesystem::path dir, std::filesystem::path data_root = {})
      : dir_(std::move(dir)), data_root_(std::move(data_root)), images_(data_root_) {
    std::filesystem::create_directories(dir_);
  }

  struct NextItem {
    std::string box_id;
    BBox box;
    std::size_t remaining = 0;
  };

  AuditSession create(const std::string& dataset, std::size_t n, std::uint64_t seed) {
    std::lock_guard lock(mu_);
    const Dataset& ds = dataset_locked(dataset);
    std::vector<std::string> ids;
    ids.reserve(ds.boxes.size());
    for (const auto& b : ds.boxes) ids.push_back(b.box_id);
    std::string id;
    for (std::size_t k = 0;; ++k) {
      id = "s" + std::to_string(seed) + "-" + std::to_string(k);
      if (!sessions_.count(id) && !std::filesystem::exists(path_for(id))) break;
    }
    AuditSession s = sample_boxes(std::move(ids), n, seed, id);
    s.dataset = dataset;
    save_session_atomic(s, path_for(id));
    sessions_[id] = s;
    return s;
  }

  AuditSession get(const std::string& id) {
    std::lock_guard lock(mu_);
    return session_locked(id);
  }

  void label(const std::string& id, const std::string& box_id, AuditClass c) {
    std::lock_guard lock(mu_);
    AuditSession updated = session_locked(id);
    record_label(updated, box_id, c);
    save_session_atomic(updated, path_for(id));
    sessions_[id] = std::move(updated);
  }

  std::optional<NextItem> next(const std::string& id) {
    std::lock_guard lock(mu_);
    const AuditSession& s = session_locked(id);
    auto box_id = s.next_unlabeled();
    if (!box_id) return std::nullopt;
    const auto& [ds, b] = box_locked(*box_id);
    return NextItem{*box_id, b->box, s.remaining()};
  }

  AuditReport report(const std::string& id) {
    std::lock_guard lock(mu_);
    return audit_report(session_locked(id));
  }

  // PNG bytes of a box crop.
  std::string crop_png(const std::string& box_id) {
    std::unique_lock lock(mu_);
    const auto& [ds, b] = box_locked(box_id);
    const ImageRecord* rec = nullptr;
    for (const auto& r : ds->images) {
      if (r.image_id == b->image_id) rec = &r;
    }
    if (!rec) throw UnknownImage("image for box '" + box_id + "' is not in its dataset");
    const std::string path = rec->path;
    const BBox box = b->box;
    lock.unlock();
    return encode_png(crop_region(*images_.get(path), box));
  }

  std::filesystem::path path_for(const std::string& id) const { return dir_ / (id + ".json"); }

 private:
  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_relative() && !data_root_.empty() ? data_root_ / path : path;
  }

  const Dataset& dataset_locked(const std::string& name) {
    auto it = datasets_.find(name);
    if (it != datasets_.end()) return *it->second;
    auto ds = std::make_shared<Dataset>(load_dataset(resolve(name)));
    for (const auto& b : ds->boxes) box_index_.emplace(b.box_id, std::make_pair(ds.get(), &b));
    return *datasets_.emplace(name, std::move(ds)).first->second;
  }

  AuditSession& session_locked(const std::string& id) {
    auto it = sessions_.find(id);
    if (it != sessions_.end()) return it->second;
    if (id.find('/') != std::string::npos || id.find("..") != std::string::npos ||
        !std::filesystem::exists(path_for(id))) {
      throw UnknownSession("no session '" + id + "'");
    }
    AuditSession s = load_session(path_for(id));
    if (!s.dataset.empty()) dataset_locked(s.dataset);
    return sessions_[id] = std::move(s);
  }

  const std::pair<const Dataset*, const PersonBox*>& box_locked(const std::string& box_id) {
    auto it = box_index_.find(box_id);
    if (it == box_index_.end()) throw UnknownBox("unknown box '" + box_id + "'");
    return it->second;
  }

  std::filesystem::path dir_;
  std::filesystem::path data_root_;
  ImageStore images_;
  std::mutex mu_;
  std::map<std::string, AuditSession> sessions_;
  std::map<std::string, std::shared_ptr<Dataset>> datasets_;
  std::map<std::string, std::pair<const Dataset*, const PersonBox*>> box_index_;
};

// Percent-encodes everything outside the RFC 3986 unreserved set.
inline std::string encode_path_segment(const std::string& s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

// HTTP front end for the review console.
//   POST /api/sessions              {dataset, n, seed} -> {session_id}
//   GET  /api/sessions/{id}/next    -> {box_id, image_url, box, remaining} | 204
//   POST /api/sessions/{id}/labels  {box_id, class} -> 200
//   GET  /api/sessions/{id}/report  -> report JSON
//   GET  /api/crops/{box_id}        -> image/png
class AuditServer {
 public:
  explicit AuditServer(SessionStore& store, const std::filesystem::path& static_dir = {}) : store_(store) {
    if (!static_dir.empty()) server_.set_mount_point("/", static_dir.string());
    routes();
  }

  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  int bind_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <typename Fn>
  static auto guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const UnknownSession& e) {
        send_json(res, 404, {{"error", e.kind()}, {"message", e.what()}});
      } catch (const UnknownBox& e) {
        send_json(res, 404, {{"error", e.kind()}, {"message", e.what()}});
      } catch (const EmptySession& e) {
        send_json(res, 409, {{"error", e.kind()}, {"message", e.what()}});
      } catch (const IoError& e) {
        send_json(res, 500, {{"error", e.kind()}, {"message", e.what()}});
      } catch (const Error& e) {
        send_json(res, 400, {{"error", e.kind()}, {"message", e.what()}});
      } catch (const json::exception& e) {
        send_json(res, 400, {{"error", "BadRequest"}, {"message", e.what()}});
      }
    };
  }

  void routes() {
    server_.Post("/api/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body);
      const auto s = store_.create(body.at("dataset").get<std::string>(),
                                   body.value("n", kDefaultAuditSampleSize),
                                   body.value("seed", std::uint64_t{0}));
      send_json(res, 201, {{"session_id", s.session_id}});
    }));
    server_.Get("/api/sessions/:id/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto item = store_.next(req.path_params.at("id"));
      if (!item) {
        res.status = 204;
        return;
      }
      send_json(res, 200, {{"box_id", item->box_id},
                           {"image_url", "/api/crops/" + encode_path_segment(item->box_id)},
                           {"box", box_to_json(item->box)},
                           {"remaining", item->remaining}});
    }));
    server_.Post("/api/sessions/:id/labels", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body);
      const json& cls = body.at("class");
      const std::string name = cls.is_number_integer() ? std::to_string(cls.get<int>()) : cls.get<std::string>();
      auto c = audit_class_from_string(name);
      if (!c) throw ParseError(0, "unknown audit class '" + name + "'");
      store_.label(req.path_params.at("id"), body.at("box_id").get<std::string>(), *c);
      send_json(res, 200, {{"ok", true}});
    }));
    server_.Get("/api/sessions/:id/report", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, store_.report(req.path_params.at("id")).to_json());
    }));
    server_.Get("/api/crops/:box_id", guarded([this](const httplib::Request& req, httplib::Response& res) {
      res.set_content(store_.crop_png(req.path_params.at("box_id")), "image/png");
    }));
  }

  SessionStore& store_;
  httplib::Server server_;
};

}  // namespace wspd
