#include "examforge/server.hpp"

#include <charconv>
#include <deque>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <boost/beast/websocket.hpp>

#include "examforge/error.hpp"

namespace examforge {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

std::pair<std::string, unsigned short> parse_bind_addr(std::string_view addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string_view::npos || colon == 0) throw Error("bad-config", "BIND_ADDR must be host:port");
  unsigned port = 0;
  const auto digits = addr.substr(colon + 1);
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc{} || p != digits.data() + digits.size() || port > 65535)
    throw Error("bad-config", "BIND_ADDR port is not a number in [0, 65535]");
  return {std::string(addr.substr(0, colon)), static_cast<unsigned short>(port)};
}

namespace {

struct Shared {
  Api& api;
  UploadManager& uploads;
  std::shared_ptr<EventHub> events;
  JobOutcomeLookup outcome;
  ServerOptions options;
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, Shared& shared) : ws_(std::move(socket)), shared_(shared) {}

  void run(http::request<http::string_body> req) {
    ws_.read_message_max(shared_.options.max_body_bytes);
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<WsSession> weak = shared_from_this();
    channel_ = std::make_shared<ChannelSession>(
        shared_.uploads, shared_.events, shared_.outcome,
        [weak](const std::string& text) {
          if (auto self = weak.lock()) self->queue_text(text);
        },
        true);
    channel_->open();
    read();
  }

  void read() { ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this())); }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      channel_.reset();
      return;
    }
    const auto data = buffer_.data();
    const auto* bytes = static_cast<const std::uint8_t*>(data.data());
    if (ws_.got_text())
      channel_->on_text(std::string_view(reinterpret_cast<const char*>(bytes), data.size()));
    else
      channel_->on_binary(std::span<const std::uint8_t>(bytes, data.size()));
    buffer_.consume(buffer_.size());
    read();
  }

  void queue_text(const std::string& text) {
    asio::post(ws_.get_executor(), [self = shared_from_this(), text] {
      self->outbox_.push_back(text);
      if (self->outbox_.size() == 1) self->write();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(asio::buffer(outbox_.front()), beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) return;
    outbox_.pop_front();
    if (!outbox_.empty()) write();
  }

  websocket::stream<beast::tcp_stream> ws_;
  Shared& shared_;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
  std::shared_ptr<ChannelSession> channel_;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Shared& shared) : stream_(std::move(socket)), shared_(shared) {}

  void run() {
    asio::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::read, shared_from_this()));
  }

 private:
  void read() {
    parser_.emplace();
    parser_->body_limit(shared_.options.max_body_bytes);
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, *parser_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    if (ec) return;
    auto req = parser_->release();
    if (websocket::is_upgrade(req)) {
      if (req.target() == "/ws") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), shared_)->run(std::move(req));
        return;
      }
    }
    ApiRequest api_req;
    api_req.method = std::string(req.method_string());
    split_target(std::string_view(req.target().data(), req.target().size()), api_req.path, api_req.query);
    for (const auto& field : req) {
      std::string name(field.name_string());
      for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      api_req.headers[name] = std::string(field.value());
    }
    api_req.body = std::move(req.body());
    auto enc = api_req.headers.find("content-encoding");
    ApiResponse r;
    if (enc != api_req.headers.end() && enc->second == "gzip") {
      try {
        api_req.body = gzip_decompress(api_req.body);
      } catch (const Error&) {
        api_req.body = "\x01";  // forces a JSON parse error
      }
    }
    r = shared_.api.route(api_req);

    auto res = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(r.status), req.version());
    res->set(http::field::server, "examforge");
    for (const auto& [k, v] : r.headers) res->set(k, v);
    res->body() = std::move(r.body);
    res->keep_alive(req.keep_alive());
    res->prepare_payload();
    http::async_write(stream_, *res,
                      [self = shared_from_this(), res](beast::error_code wec, std::size_t) {
                        if (wec) return;
                        if (!res->keep_alive()) {
                          beast::error_code ignored;
                          self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                          return;
                        }
                        self->read();
                      });
  }

  beast::tcp_stream stream_;
  Shared& shared_;
  beast::flat_buffer buffer_;
  std::optional<http::request_parser<http::string_body>> parser_;
};

}  // namespace

struct Server::Impl {
  explicit Impl(Shared s) : shared(std::move(s)) {}

  Shared shared;
  asio::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::vector<std::thread> threads;
  std::mutex mutex;
  std::condition_variable stopped_cv;
  bool stopped = false;

  void accept() {
    acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) {
        if (ec == asio::error::operation_aborted) return;
      } else {
        std::make_shared<HttpSession>(std::move(socket), shared)->run();
      }
      accept();
    });
  }
};

Server::Server(Api& api, UploadManager& uploads, std::shared_ptr<EventHub> events, JobOutcomeLookup outcome,
               ServerOptions options)
    : impl_(std::make_unique<Impl>(Shared{api, uploads, std::move(events), std::move(outcome), std::move(options)})) {}

Server::~Server() { stop(); }

void Server::start() {
  auto [host, port] = parse_bind_addr(impl_->shared.options.bind_addr);
  beast::error_code ec;
  const auto address = asio::ip::make_address(host == "localhost" ? "127.0.0.1" : host, ec);
  if (ec) throw Error("bad-config", "BIND_ADDR host is not an IP address: " + host);
  const tcp::endpoint endpoint(address, port);
  auto& acc = impl_->acceptor;
  acc.open(endpoint.protocol(), ec);
  if (!ec) acc.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) acc.bind(endpoint, ec);
  if (!ec) acc.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw Error("bind-failed", "cannot listen on " + impl_->shared.options.bind_addr + ": " + ec.message());
  impl_->accept();
  const int n = std::max(1, impl_->shared.options.threads);
  for (int i = 0; i < n; ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
}

void Server::stop() {
  if (!impl_) return;
  {
    std::lock_guard lock(impl_->mutex);
    if (impl_->stopped) return;
    impl_->stopped = true;
  }
  impl_->ioc.stop();
  for (auto& t : impl_->threads)
    if (t.joinable()) t.join();
  impl_->threads.clear();
  impl_->stopped_cv.notify_all();
}

void Server::wait() {
  std::unique_lock lock(impl_->mutex);
  impl_->stopped_cv.wait(lock, [&] { return impl_->stopped; });
}

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

}  // namespace examforge
