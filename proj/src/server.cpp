#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <chrono>
#include <deque>
#include <iostream>

#include "mc/service.hpp"

namespace mc::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

// Streams a session's turns as {"type":"turn","session_id":..,"turn":{..}}
// text frames. Client frames are read and ignored; closing unsubscribes.
class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, Service& svc, std::string session_id)
      : ws_(std::move(socket)), svc_(svc), session_id_(std::move(session_id)) {}

  ~WsSession() {
    if (token_ != 0) svc_.unsubscribe(token_);
  }

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<WsSession> weak = shared_from_this();
    auto exec = ws_.get_executor();
    try {
      token_ = svc_.subscribe(session_id_, [weak, exec](const std::string& id, const dialogue::Turn& turn) {
        std::string msg = Json{{"type", "turn"}, {"session_id", id}, {"turn", dialogue::to_json(turn)}}.dump();
        net::post(exec, [weak, msg = std::move(msg)]() mutable {
          if (auto self = weak.lock()) self->enqueue(std::move(msg));
        });
      });
    } catch (const std::exception&) {
      return;
    }
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return;
    buffer_.consume(buffer_.size());
    do_read();
  }

  void enqueue(std::string msg) {
    queue_.push_back(std::move(msg));
    if (queue_.size() == 1) do_write();
  }

  void do_write() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) return;
    queue_.pop_front();
    if (!queue_.empty()) do_write();
  }

  websocket::stream<beast::tcp_stream> ws_;
  Service& svc_;
  std::string session_id_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  std::uint64_t token_ = 0;
};

// `/sessions/{id}/stream` -> id.
std::optional<std::string> stream_session_id(std::string_view target) {
  if (const auto q = target.find('?'); q != std::string_view::npos) target = target.substr(0, q);
  constexpr std::string_view prefix = "/sessions/";
  constexpr std::string_view suffix = "/stream";
  if (target.size() <= prefix.size() + suffix.size()) return std::nullopt;
  if (target.substr(0, prefix.size()) != prefix) return std::nullopt;
  if (target.substr(target.size() - suffix.size()) != suffix) return std::nullopt;
  const auto id = target.substr(prefix.size(), target.size() - prefix.size() - suffix.size());
  if (id.find('/') != std::string_view::npos) return std::nullopt;
  return std::string(id);
}

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Service& svc) : stream_(std::move(socket)), svc_(svc) {}

  void run() {
    net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
  }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;

    if (websocket::is_upgrade(req_)) {
      const auto id = stream_session_id(std::string_view(req_.target().data(), req_.target().size()));
      bool known = false;
      if (id) {
        try {
          svc_.session_record(*id);
          known = true;
        } catch (const std::exception&) {
        }
      }
      if (known) {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), svc_, *id)->run(std::move(req_));
        return;
      }
      send(HttpResponse{404, "application/json", Json{{"code", "not_found"}, {"message", "no such stream"}}.dump()});
      return;
    }

    HttpRequest request{std::string(req_.method_string()), std::string(req_.target()), req_.body()};
    send(handle_request(svc_, request));
  }

  void send(const HttpResponse& r) {
    auto res = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(r.status), req_.version());
    res->set(http::field::server, "mc-service");
    res->set(http::field::content_type, r.content_type);
    res->keep_alive(req_.keep_alive());
    res->body() = r.body;
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (!res->keep_alive()) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->do_read();
    });
  }

  beast::tcp_stream stream_;
  Service& svc_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

class Listener : public std::enable_shared_from_this<Listener> {
 public:
  Listener(net::io_context& ioc, tcp::endpoint endpoint, Service& svc) : ioc_(ioc), acceptor_(ioc), svc_(svc) {
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen(net::socket_base::max_listen_connections);
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void run() { do_accept(); }

 private:
  void do_accept() {
    acceptor_.async_accept(net::make_strand(ioc_), beast::bind_front_handler(&Listener::on_accept, shared_from_this()));
  }

  void on_accept(beast::error_code ec, tcp::socket socket) {
    if (ec == net::error::operation_aborted) return;
    if (!ec) std::make_shared<HttpSession>(std::move(socket), svc_)->run();
    do_accept();
  }

  net::io_context& ioc_;
  tcp::acceptor acceptor_;
  Service& svc_;
};

}  // namespace

struct Server::Impl {
  Service& svc;
  unsigned threads;
  net::io_context ioc;
  std::unique_ptr<net::steady_timer> silence_timer;
  std::vector<std::thread> pool;

  Impl(Service& s, unsigned n) : svc(s), threads(n == 0 ? 1 : n), ioc(static_cast<int>(threads)) {}

  void arm_silence_timer() {
    silence_timer->expires_after(std::chrono::seconds(1));
    silence_timer->async_wait([this](beast::error_code ec) {
      if (ec) return;
      try {
        svc.tick(svc.now());
      } catch (const std::exception& e) {
        std::cerr << "silence timer: " << e.what() << "\n";
      }
      arm_silence_timer();
    });
  }
};

Server::Server(Service& service, unsigned threads) : impl_(std::make_unique<Impl>(service, threads)) {}

Server::~Server() { stop(); }

unsigned short Server::start(const std::string& host, unsigned short port) {
  const auto address = net::ip::make_address(host);
  auto listener = std::make_shared<Listener>(impl_->ioc, tcp::endpoint{address, port}, impl_->svc);
  const auto bound = listener->port();
  listener->run();
  if (impl_->svc.config().silence_timeout_seconds > 0) {
    impl_->silence_timer = std::make_unique<net::steady_timer>(impl_->ioc);
    impl_->arm_silence_timer();
  }
  for (unsigned i = 0; i < impl_->threads; ++i) {
    impl_->pool.emplace_back([this] { impl_->ioc.run(); });
  }
  return bound;
}

void Server::stop() {
  if (!impl_) return;
  impl_->ioc.stop();
  wait();
}

void Server::wait() {
  for (auto& t : impl_->pool) {
    if (t.joinable()) t.join();
  }
  impl_->pool.clear();
}

}  // namespace mc::service
