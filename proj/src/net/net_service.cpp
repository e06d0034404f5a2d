#include "voxstream/net/io.hpp"

#include <array>
#include <iostream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace voxstream {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using boost::system::error_code;

Endpoint parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("endpoint must be host:port: " + s);
  Endpoint e;
  e.host = colon == 0 ? "0.0.0.0" : s.substr(0, colon);
  const int port = std::stoi(s.substr(colon + 1));
  if (port < 0 || port > 65535) throw std::invalid_argument("port out of range: " + s);
  e.port = static_cast<std::uint16_t>(port);
  return e;
}

void Inbox::on_message(Message&& message) {
  std::lock_guard lock(mu_);
  queue_.push_back(std::move(message));
  cv_.notify_all();
}

void Inbox::on_close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  cv_.notify_all();
}

std::optional<Message> Inbox::receive(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) return std::nullopt;
  Message m = std::move(queue_.front());
  queue_.pop_front();
  return m;
}

bool Inbox::closed() const {
  std::lock_guard lock(mu_);
  return closed_ && queue_.empty();
}

class ChannelBase;

struct Listener {
  tcp::acceptor acceptor;
  Transport transport;
  AcceptFn on_accept;
  explicit Listener(asio::io_context& ioc) : acceptor(ioc) {}
};

struct NetService::Impl {
  asio::io_context ioc;
  asio::executor_work_guard<asio::io_context::executor_type> work{ioc.get_executor()};
  std::vector<std::thread> threads;
  ChannelLimits limits;

  std::mutex mu;
  std::condition_variable cv;
  std::vector<std::weak_ptr<ChannelBase>> channels;
  std::vector<std::shared_ptr<Listener>> listeners;
  std::size_t live = 0;
  bool stopped = false;

  void channel_started(const std::shared_ptr<ChannelBase>& c) {
    std::lock_guard lock(mu);
    ++live;
    std::erase_if(channels, [](const auto& w) { return w.expired(); });
    channels.push_back(c);
  }
  void channel_finished() {
    std::lock_guard lock(mu);
    --live;
    cv.notify_all();
  }
  void accept_next(const std::shared_ptr<Listener>& l);
};

/// Shared machinery: bounded outgoing queue drained on a strand, bounded
/// incoming queue drained by a dedicated dispatch thread.
class ChannelBase : public Channel, public std::enable_shared_from_this<ChannelBase> {
 public:
  ChannelBase(NetService::Impl& svc, std::string peer)
      : svc_(svc), strand_(asio::make_strand(svc.ioc)), peer_(std::move(peer)) {}

  void start(std::shared_ptr<MessageHandler> handler) {
    handler_ = std::move(handler);
    auto self = shared_from_this();
    svc_.channel_started(self);
    std::thread([self]() mutable {
      NetService::Impl* svc = &self->svc_;
      self->dispatch_loop();
      self.reset();
      svc->channel_finished();
    }).detach();
    asio::post(strand_, [self] { self->begin(); });
  }

  bool send(std::vector<std::uint8_t> frame) override {
    std::unique_lock lock(mu_);
    out_cv_.wait(lock, [&] { return !accepting_ || out_bytes_ < svc_.limits.max_outgoing_bytes; });
    if (!accepting_) return false;
    auto f = std::make_shared<std::vector<std::uint8_t>>(std::move(frame));
    out_bytes_ += f->size();
    out_.push_back(std::move(f));
    if (!writing_) {
      writing_ = true;
      asio::post(strand_, [self = shared_from_this()] { self->write_next(); });
    }
    return true;
  }

  void close() override {
    std::lock_guard lock(mu_);
    if (!accepting_) return;
    accepting_ = false;
    closing_ = true;
    out_cv_.notify_all();
    if (!writing_) asio::post(strand_, [self = shared_from_this()] { self->shutdown_now(); });
  }

  void abort() override {
    std::lock_guard lock(mu_);
    accepting_ = false;
    out_.clear();
    out_bytes_ = 0;
    out_cv_.notify_all();
    asio::post(strand_, [self = shared_from_this()] { self->shutdown_now(); });
  }

  bool is_open() const override {
    std::lock_guard lock(mu_);
    return accepting_ && !transport_closed_;
  }
  std::string peer() const override { return peer_; }
  std::uint64_t bytes_sent() const override { return bytes_sent_.load(); }
  std::uint64_t bytes_received() const override { return bytes_received_.load(); }

 protected:
  virtual void begin() = 0;
  virtual void read_next() = 0;
  virtual void write_frame(std::shared_ptr<std::vector<std::uint8_t>> frame) = 0;
  virtual void close_transport() = 0;

  // Strand only.
  void write_next() {
    std::shared_ptr<std::vector<std::uint8_t>> f;
    {
      std::unique_lock lock(mu_);
      if (!io_ready_ || transport_closed_) return;
      if (out_.empty()) {
        writing_ = false;
        if (closing_) {
          lock.unlock();
          shutdown_now();
        }
        return;
      }
      f = out_.front();
    }
    write_frame(std::move(f));
  }

  void on_written(const error_code& ec, std::size_t n) {
    if (ec) {
      fail();
      return;
    }
    bytes_sent_ += n;
    {
      std::lock_guard lock(mu_);
      if (!out_.empty()) {
        out_bytes_ -= out_.front()->size();
        out_.pop_front();
      }
      out_cv_.notify_all();
    }
    write_next();
  }

  void deliver(Message&& m) {
    bytes_received_ += m.wire_bytes;
    std::lock_guard lock(mu_);
    in_bytes_ += m.wire_bytes;
    in_.push_back(std::move(m));
    in_cv_.notify_all();
  }

  void continue_reading() {
    {
      std::lock_guard lock(mu_);
      if (transport_closed_) return;
      if (in_bytes_ > svc_.limits.max_incoming_bytes) {
        read_paused_ = true;
        return;
      }
    }
    read_next();
  }

  void read_failed() {
    {
      std::lock_guard lock(mu_);
      read_done_ = true;
      in_cv_.notify_all();
    }
    fail();
  }

  void set_io_ready() {
    bool resume = false;
    {
      std::lock_guard lock(mu_);
      io_ready_ = true;
      resume = writing_;
    }
    if (resume) write_next();
  }

  void fail() {
    {
      std::lock_guard lock(mu_);
      accepting_ = false;
      out_.clear();
      out_bytes_ = 0;
      out_cv_.notify_all();
    }
    shutdown_now();
  }

  void shutdown_now() {
    {
      std::lock_guard lock(mu_);
      if (transport_closed_) return;
      transport_closed_ = true;
      accepting_ = false;
      out_cv_.notify_all();
      in_cv_.notify_all();
    }
    close_transport();
  }

  NetService::Impl& svc_;
  asio::strand<asio::io_context::executor_type> strand_;
  bool io_ready_ = true;

 private:
  void dispatch_loop() {
    for (;;) {
      Message m;
      {
        std::unique_lock lock(mu_);
        in_cv_.wait(lock, [&] { return !in_.empty() || read_done_ || transport_closed_; });
        if (in_.empty()) break;
        m = std::move(in_.front());
        in_.pop_front();
        in_bytes_ -= m.wire_bytes;
        if (read_paused_ && in_bytes_ <= svc_.limits.max_incoming_bytes / 2) {
          read_paused_ = false;
          asio::post(strand_, [self = shared_from_this()] { self->read_next(); });
        }
      }
      try {
        handler_->on_message(std::move(m));
      } catch (const std::exception& e) {
        std::cerr << "connection " << peer_ << ": handler error: " << e.what() << "\n";
        abort();
      }
    }
    handler_->on_close();
    handler_.reset();
  }

  std::string peer_;
  std::shared_ptr<MessageHandler> handler_;

  mutable std::mutex mu_;
  std::condition_variable out_cv_, in_cv_;
  std::deque<std::shared_ptr<std::vector<std::uint8_t>>> out_;
  std::size_t out_bytes_ = 0;
  bool writing_ = false;
  bool accepting_ = true;
  bool closing_ = false;
  bool transport_closed_ = false;
  std::deque<Message> in_;
  std::size_t in_bytes_ = 0;
  bool read_paused_ = false;
  bool read_done_ = false;
  std::atomic<std::uint64_t> bytes_sent_{0}, bytes_received_{0};
};

namespace {

std::string describe(const tcp::socket& s) {
  error_code ec;
  const auto ep = s.remote_endpoint(ec);
  return ec ? std::string("unknown") : ep.address().to_string() + ":" + std::to_string(ep.port());
}

class TcpChannel final : public ChannelBase {
 public:
  TcpChannel(NetService::Impl& svc, tcp::socket socket) : ChannelBase(svc, describe(socket)), socket_(std::move(socket)) {
    error_code ec;
    socket_.set_option(tcp::no_delay(true), ec);
  }

 protected:
  void begin() override { read_next(); }

  void read_next() override {
    socket_.async_read_some(asio::buffer(buf_), asio::bind_executor(strand_, [self = self()](error_code ec, std::size_t n) {
      if (ec) {
        self->read_failed();
        return;
      }
      try {
        self->decoder_.feed({self->buf_.data(), n});
        while (auto m = self->decoder_.next()) self->deliver(std::move(*m));
      } catch (const ProtocolError& e) {
        // Frames decoded ahead of the corrupt one are still delivered.
        while (auto m = self->decoder_.next()) self->deliver(std::move(*m));
        std::cerr << "connection " << self->peer() << ": " << e.what() << "\n";
        self->read_failed();
        return;
      }
      self->continue_reading();
    }));
  }

  void write_frame(std::shared_ptr<std::vector<std::uint8_t>> f) override {
    asio::async_write(socket_, asio::buffer(*f),
                      asio::bind_executor(strand_, [self = self(), f](error_code ec, std::size_t n) { self->on_written(ec, n); }));
  }

  void close_transport() override {
    error_code ec;
    socket_.shutdown(tcp::socket::shutdown_both, ec);
    socket_.close(ec);
  }

 private:
  std::shared_ptr<TcpChannel> self() { return std::static_pointer_cast<TcpChannel>(shared_from_this()); }

  tcp::socket socket_;
  std::array<std::uint8_t, 1 << 16> buf_{};
  FrameDecoder decoder_;
};

class WsChannel final : public ChannelBase {
 public:
  // Server side: the handshake runs on the strand before reading.
  WsChannel(NetService::Impl& svc, tcp::socket socket, bool handshake_done)
      : ChannelBase(svc, describe(socket)), ws_(std::move(socket)), server_side_(!handshake_done) {
    configure();
    io_ready_ = handshake_done;
  }
  WsChannel(NetService::Impl& svc, websocket::stream<tcp::socket> ws)
      : ChannelBase(svc, describe(ws.next_layer())), ws_(std::move(ws)), server_side_(false) {
    configure();
  }

 protected:
  void begin() override {
    if (!server_side_) {
      read_next();
      return;
    }
    http::async_read(ws_.next_layer(), hbuf_, req_, asio::bind_executor(strand_, [self = self()](error_code ec, std::size_t) {
      if (ec || !websocket::is_upgrade(self->req_) || self->req_.target() != kWebSocketPath) {
        self->read_failed();
        return;
      }
      self->ws_.async_accept(self->req_, asio::bind_executor(self->strand_, [self](error_code ec2) {
        if (ec2) {
          self->read_failed();
          return;
        }
        self->set_io_ready();
        self->read_next();
      }));
    }));
  }

  void read_next() override {
    ws_.async_read(rbuf_, asio::bind_executor(strand_, [self = self()](error_code ec, std::size_t) {
      if (ec) {
        self->read_failed();
        return;
      }
      try {
        const auto data = self->rbuf_.cdata();
        Message m = decode_frame({static_cast<const std::uint8_t*>(data.data()), data.size()});
        self->rbuf_.consume(self->rbuf_.size());
        self->deliver(std::move(m));
      } catch (const ProtocolError& e) {
        std::cerr << "websocket " << self->peer() << ": " << e.what() << "\n";
        self->read_failed();
        return;
      }
      self->continue_reading();
    }));
  }

  void write_frame(std::shared_ptr<std::vector<std::uint8_t>> f) override {
    ws_.async_write(asio::buffer(*f),
                    asio::bind_executor(strand_, [self = self(), f](error_code ec, std::size_t n) { self->on_written(ec, n); }));
  }

  void close_transport() override {
    error_code ec;
    ws_.next_layer().shutdown(tcp::socket::shutdown_both, ec);
    ws_.next_layer().close(ec);
  }

 private:
  void configure() {
    ws_.binary(true);
    ws_.read_message_max(kMaxPayloadBytes + kHeaderBytes);
  }
  std::shared_ptr<WsChannel> self() { return std::static_pointer_cast<WsChannel>(shared_from_this()); }

  websocket::stream<tcp::socket> ws_;
  bool server_side_;
  beast::flat_buffer hbuf_;
  http::request<http::string_body> req_;
  beast::flat_buffer rbuf_;
};

}  // namespace

void NetService::Impl::accept_next(const std::shared_ptr<Listener>& l) {
  l->acceptor.async_accept(ioc, [this, l](error_code ec, tcp::socket socket) {
    if (ec) {
      if (ec != asio::error::operation_aborted && l->acceptor.is_open()) accept_next(l);
      return;
    }
    std::shared_ptr<ChannelBase> ch;
    if (l->transport == Transport::kTcp) ch = std::make_shared<TcpChannel>(*this, std::move(socket));
    else ch = std::make_shared<WsChannel>(*this, std::move(socket), false);
    std::shared_ptr<MessageHandler> handler = l->on_accept(ch);
    if (handler) ch->start(std::move(handler));
    accept_next(l);
  });
}

NetService::NetService(unsigned io_threads, ChannelLimits limits) : impl_(std::make_unique<Impl>()) {
  impl_->limits = limits;
  for (unsigned i = 0; i < std::max(1u, io_threads); ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
}

NetService::~NetService() { shutdown(); }

std::uint16_t NetService::listen(Transport transport, const Endpoint& at, AcceptFn on_accept) {
  auto l = std::make_shared<Listener>(impl_->ioc);
  l->transport = transport;
  l->on_accept = std::move(on_accept);
  const tcp::endpoint ep(asio::ip::make_address(at.host), at.port);
  l->acceptor.open(ep.protocol());
  l->acceptor.set_option(tcp::acceptor::reuse_address(true));
  l->acceptor.bind(ep);
  l->acceptor.listen();
  const std::uint16_t port = l->acceptor.local_endpoint().port();
  {
    std::lock_guard lock(impl_->mu);
    impl_->listeners.push_back(l);
  }
  asio::post(impl_->ioc, [this, l] { impl_->accept_next(l); });
  return port;
}

std::shared_ptr<Channel> NetService::connect(Transport transport, const Endpoint& to,
                                             std::shared_ptr<MessageHandler> handler) {
  tcp::resolver resolver(impl_->ioc);
  const auto results = resolver.resolve(to.host, std::to_string(to.port));
  tcp::socket socket(impl_->ioc);
  asio::connect(socket, results);
  std::shared_ptr<ChannelBase> ch;
  if (transport == Transport::kTcp) {
    ch = std::make_shared<TcpChannel>(*impl_, std::move(socket));
  } else {
    websocket::stream<tcp::socket> ws(std::move(socket));
    ws.handshake(to.host + ":" + std::to_string(to.port), kWebSocketPath);
    ch = std::make_shared<WsChannel>(*impl_, std::move(ws));
  }
  ch->start(std::move(handler));
  return ch;
}

void NetService::shutdown() {
  std::vector<std::shared_ptr<Listener>> listeners;
  std::vector<std::shared_ptr<ChannelBase>> channels;
  {
    std::lock_guard lock(impl_->mu);
    if (impl_->stopped) return;
    impl_->stopped = true;
    listeners.swap(impl_->listeners);
    for (auto& w : impl_->channels)
      if (auto c = w.lock()) channels.push_back(std::move(c));
  }
  for (auto& l : listeners) {
    asio::post(impl_->ioc, [l] {
      error_code ec;
      l->acceptor.close(ec);
    });
  }
  for (auto& c : channels) c->abort();
  channels.clear();
  {
    std::unique_lock lock(impl_->mu);
    impl_->cv.wait(lock, [&] { return impl_->live == 0; });
  }
  impl_->work.reset();
  for (auto& t : impl_->threads) t.join();
  impl_->threads.clear();
}

std::size_t NetService::live_connections() const {
  std::lock_guard lock(impl_->mu);
  return impl_->live;
}

}  // namespace voxstream
