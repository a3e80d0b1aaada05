// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#include "silocomm/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/uio.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <random>

#include "silocomm/error.hpp"

namespace silocomm {

namespace {

constexpr char kHelloMagic[4] = {'S', 'C', 'H', '1'};
constexpr char kAckMagic[4] = {'S', 'C', 'A', '1'};
constexpr std::size_t kChunkHeaderBytes = 12;  // u32 len | u64 ready_ns
constexpr std::size_t kMaxBufferedIn = 32u << 20;
constexpr auto kWriterLead = std::chrono::milliseconds(100);

void write_fd_all(int fd, const void* data, std::size_t n) {
    const char* p = static_cast<const char*>(data);
    while (n > 0) {
        ssize_t k = ::send(fd, p, n, MSG_NOSIGNAL);
        if (k < 0) {
            if (errno == EINTR) continue;
            throw PeerUnreachableError(std::string("socket write failed: ") + std::strerror(errno));
        }
        p += k;
        n -= std::size_t(k);
    }
}

void write_fd_iov(int fd, const void* h, std::size_t hn, const void* b, std::size_t bn) {
    iovec iov[2];
    iov[0] = {const_cast<void*>(h), hn};
    iov[1] = {const_cast<void*>(b), bn};
    msghdr msg{};
    msg.msg_iov = iov;
    msg.msg_iovlen = 2;
    std::size_t total = hn + bn;
    std::size_t sent = 0;
    while (sent < total) {
        ssize_t k = ::sendmsg(fd, &msg, MSG_NOSIGNAL);
        if (k < 0) {
            if (errno == EINTR) continue;
            throw PeerUnreachableError(std::string("socket write failed: ") + std::strerror(errno));
        }
        sent += std::size_t(k);
        // Adjust iovecs for the next round.
        std::size_t skip = std::size_t(k);
        for (auto& v : iov) {
            std::size_t take = std::min(skip, v.iov_len);
            v.iov_base = static_cast<char*>(v.iov_base) + take;
            v.iov_len -= take;
            skip -= take;
        }
    }
}

bool read_fd_all(int fd, void* data, std::size_t n) {
    char* p = static_cast<char*>(data);
    while (n > 0) {
        ssize_t k = ::recv(fd, p, n, 0);
        if (k == 0) return false;
        if (k < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        p += k;
        n -= std::size_t(k);
    }
    return true;
}

void put_u32_at(std::uint8_t* p, std::uint32_t v) {
    for (int i = 0; i < 4; i++) p[i] = std::uint8_t(v >> (8 * i));
}

void put_u64_at(std::uint8_t* p, std::uint64_t v) {
    for (int i = 0; i < 8; i++) p[i] = std::uint8_t(v >> (8 * i));
}

std::uint32_t get_u32_at(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; i++) v |= std::uint32_t(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64_at(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; i++) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
}

TimePoint timepoint_from_ns(std::uint64_t ns) {
    return TimePoint(std::chrono::duration_cast<Clock::duration>(std::chrono::nanoseconds(ns)));
}

std::uint64_t ns_from_timepoint(TimePoint tp) {
    return std::uint64_t(
        std::chrono::duration_cast<std::chrono::nanoseconds>(tp.time_since_epoch()).count());
}

int tcp_connect(const std::string& host, std::uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw PeerUnreachableError("socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw PeerUnreachableError("bad host address: " + host);
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        int err = errno;
        ::close(fd);
        throw PeerUnreachableError("connect to " + host + ":" + std::to_string(port) +
                                   " failed: " + std::strerror(err));
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return fd;
}

}  // namespace

// ---------------------------------------------------------------------------
// BackendSpec
// ---------------------------------------------------------------------------

BackendSpec BackendSpec::preset(const std::string& name) {
    BackendSpec s;
    s.name = name;
    if (name == "grpc_like") {
        s.connections_per_peer = 1;
        s.serialization = Serialization::Generic;
        s.buffering = Buffering::CopyPerSend;
        s.generic_ser_bytes_per_s = 300e6;
    } else if (name == "mpi_generic_like") {
        s.connections_per_peer = 1;
        s.serialization = Serialization::Generic;
        s.buffering = Buffering::CopyPerSend;
        s.generic_ser_bytes_per_s = 500e6;
    } else if (name == "mpi_membuff_like") {
        s.connections_per_peer = 1;
        s.serialization = Serialization::RawBuffer;
        s.buffering = Buffering::SharedBuffer;
    } else if (name == "torch_rpc_like") {
        s.connections_per_peer = 8;
        s.serialization = Serialization::RawBuffer;
        s.buffering = Buffering::SharedBuffer;
    } else if (name == "hybrid") {
        s.connections_per_peer = 1;
        s.serialization = Serialization::RawBuffer;
        s.buffering = Buffering::SharedBuffer;
        s.hybrid = true;
    } else {
        throw ConfigError("unknown backend preset '" + name +
                          "'; valid: grpc_like, mpi_generic_like, mpi_membuff_like, "
                          "torch_rpc_like, hybrid");
    }
    return s;
}

const std::vector<std::string>& BackendSpec::preset_names() {
    static const std::vector<std::string> names = {"grpc_like", "mpi_generic_like",
                                                   "mpi_membuff_like", "torch_rpc_like", "hybrid"};
    return names;
}

BackendSpec BackendSpec::scaled(double s) const {
    BackendSpec out = *this;
    out.generic_ser_bytes_per_s = generic_ser_bytes_per_s * s;
    out.fallback_threshold = std::uint64_t(double(fallback_threshold) * s);
    return out;
}

Route route(std::uint64_t payload_bytes, std::uint64_t threshold) {
    return payload_bytes > threshold ? Route::Store : Route::Inline;
}

// ---------------------------------------------------------------------------
// Connection plumbing
// ---------------------------------------------------------------------------

namespace detail {

struct InChunk {
    TimePoint ready;
    Bytes data;
    std::size_t consumed = 0;
};

struct Conn {
    int fd = -1;
    bool out_shaped = false;
    bool in_shaped = false;
    std::shared_ptr<LinkShaper::Channel> out_channel;
    std::size_t out_quantum = 64 * 1024;

    std::mutex in_mu;
    std::condition_variable in_cv;
    std::condition_variable in_space_cv;
    std::deque<InChunk> in_q;
    std::size_t in_bytes = 0;
    bool in_eof = false;
    std::atomic<bool> stop{false};
    std::thread drain_thread;

    ~Conn() {
        shutdown_fd();
        if (drain_thread.joinable()) drain_thread.join();
        if (fd >= 0) ::close(fd);
    }

    void shutdown_fd() {
        stop.store(true);
        if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
        {
            std::lock_guard lk(in_mu);
            in_space_cv.notify_all();
        }
    }

    void start_drain() {
        drain_thread = std::thread([this] { drain_loop(); });
    }

    void drain_loop() {
        for (;;) {
            InChunk chunk;
            if (in_shaped) {
                std::uint8_t hdr[kChunkHeaderBytes];
                if (!read_fd_all(fd, hdr, sizeof(hdr))) break;
                std::uint32_t len = get_u32_at(hdr);
                chunk.ready = timepoint_from_ns(get_u64_at(hdr + 4));
                chunk.data.resize(len);
                if (len > 0 && !read_fd_all(fd, chunk.data.data(), len)) break;
            } else {
                chunk.data.resize(64 * 1024);
                ssize_t k = ::recv(fd, chunk.data.data(), chunk.data.size(), 0);
                if (k <= 0) {
                    if (k < 0 && errno == EINTR) continue;
                    break;
                }
                chunk.data.resize(std::size_t(k));
                chunk.ready = TimePoint::min();
            }
            std::unique_lock lk(in_mu);
            in_space_cv.wait(lk, [this] { return in_bytes < kMaxBufferedIn || stop.load(); });
            if (stop.load()) break;
            in_bytes += chunk.data.size();
            in_q.push_back(std::move(chunk));
            in_cv.notify_one();
        }
        std::lock_guard lk(in_mu);
        in_eof = true;
        in_cv.notify_all();
    }

    // Fills dst exactly, honoring chunk delivery times; false on EOF.
    bool read_exact(std::uint8_t* dst, std::size_t n, TimePoint* first_byte_at = nullptr) {
        std::size_t got = 0;
        while (got < n) {
            InChunk* front;
            {
                std::unique_lock lk(in_mu);
                in_cv.wait(lk, [this] { return !in_q.empty() || in_eof; });
                if (in_q.empty()) return false;
                front = &in_q.front();
            }
            if (in_shaped && front->consumed == 0) precise_sleep_until(front->ready);
            if (first_byte_at && got == 0) *first_byte_at = Clock::now();
            std::size_t take = std::min(n - got, front->data.size() - front->consumed);
            std::memcpy(dst + got, front->data.data() + front->consumed, take);
            got += take;
            std::lock_guard lk(in_mu);
            front->consumed += take;
            if (front->consumed == front->data.size()) {
                in_bytes -= front->data.size();
                in_q.pop_front();
                in_space_cv.notify_one();
            }
        }
        return true;
    }

    // Writes spans through the outbound shaping; returns the last grant time.
    TimePoint write_stream(std::initializer_list<ByteView> spans, TimePoint deadline) {
        if (!out_shaped) {
            for (const auto& s : spans)
                if (!s.empty()) write_fd_all(fd, s.data(), s.size());
            return Clock::now();
        }
        TimePoint last = Clock::now();
        std::uint8_t hdr[kChunkHeaderBytes];
        for (const auto& s : spans) {
            std::size_t off = 0;
            while (off < s.size()) {
                if (deadline != TimePoint::max() && Clock::now() > deadline)
                    throw SendTimeoutError("send exceeded its deadline");
                std::size_t n = std::min(out_quantum, s.size() - off);
                TimePoint grant = out_channel->grant(n);
                TimePoint ready = out_channel->delivery_time(grant);
                put_u32_at(hdr, std::uint32_t(n));
                put_u64_at(hdr + 4, ns_from_timepoint(ready));
                write_fd_iov(fd, hdr, sizeof(hdr), s.data() + off, n);
                off += n;
                last = grant;
                if (grant - Clock::now() > kWriterLead)
                    std::this_thread::sleep_until(grant - kWriterLead);
            }
        }
        return last;
    }
};

struct LinkShared : std::enable_shared_from_this<LinkShared> {
    Endpoint* owner = nullptr;
    ParticipantId peer = 0;
    std::uint64_t nonce = 0;
    std::vector<std::unique_ptr<Conn>> conns;
    std::mutex send_mu;
    std::thread assembler;
    std::atomic<bool> closed{false};

    ~LinkShared() { close(); }

    void close() {
        bool expected = false;
        if (!closed.compare_exchange_strong(expected, true)) {
            if (assembler.joinable() && assembler.get_id() != std::this_thread::get_id())
                assembler.join();
            return;
        }
        for (auto& c : conns)
            if (c) c->shutdown_fd();
        if (assembler.joinable() && assembler.get_id() != std::this_thread::get_id())
            assembler.join();
    }

    void start() {
        for (auto& c : conns) c->start_drain();
        assembler = std::thread([self = shared_from_this()] { self->assemble_loop(); });
    }

    // One frame: prefix+header+body_len+slice0 on conn 0, slices 1..K-1 on
    // the other connections, concurrently. Returns bytes on wire.
    std::uint64_t write_frame(const Bytes& header, ByteView body, TimePoint deadline) {
        std::lock_guard lock(send_mu);
        std::size_t K = conns.size();
        std::uint8_t prefix[kFramePrefixBytes];
        std::memcpy(prefix, kFrameMagic, 4);
        put_u32_at(prefix + 4, std::uint32_t(header.size()));
        std::uint8_t blen[kBodyLenBytes];
        put_u64_at(blen, body.size());

        std::size_t base = body.size() / K;
        std::size_t rem = body.size() % K;
        auto slice = [&](std::size_t i) {
            std::size_t len = base + (i < rem ? 1 : 0);
            std::size_t start = i * base + std::min(i, rem);
            return body.subspan(start, len);
        };

        TimePoint last{};
        if (K == 1) {
            last = conns[0]->write_stream(
                {ByteView(prefix, sizeof(prefix)), ByteView(header), ByteView(blen, sizeof(blen)),
                 body},
                deadline);
        } else {
            std::vector<TimePoint> grants(K);
            std::exception_ptr err;
            std::mutex err_mu;
            std::vector<std::thread> workers;
            for (std::size_t i = 1; i < K; i++) {
                workers.emplace_back([&, i] {
                    try {
                        grants[i] = conns[i]->write_stream({slice(i)}, deadline);
                    } catch (...) {
                        std::lock_guard g(err_mu);
                        if (!err) err = std::current_exception();
                    }
                });
            }
            try {
                grants[0] = conns[0]->write_stream(
                    {ByteView(prefix, sizeof(prefix)), ByteView(header),
                     ByteView(blen, sizeof(blen)), slice(0)},
                    deadline);
            } catch (...) {
                std::lock_guard g(err_mu);
                if (!err) err = std::current_exception();
            }
            for (auto& w : workers) w.join();
            if (err) std::rethrow_exception(err);
            last = *std::max_element(grants.begin(), grants.end());
        }
        precise_sleep_until(last);  // the sender occupies the link until the final grant
        return kFramePrefixBytes + header.size() + kBodyLenBytes + body.size();
    }

    void assemble_loop();
};

}  // namespace detail

// ---------------------------------------------------------------------------
// PeerLink
// ---------------------------------------------------------------------------

PeerLink::PeerLink(std::shared_ptr<detail::LinkShared> shared) : shared_(std::move(shared)) {}
PeerLink::~PeerLink() = default;
ParticipantId PeerLink::peer_id() const { return shared_->peer; }

namespace {

struct SerializeResult {
    Bytes buf;
    double t_serialize = 0;
};

// Generic serialization models pickle/proto encoding: it holds the
// endpoint's serialization lock (the modeled stacks are GIL-bound) for
// size/rate seconds. RawBuffer is a plain buffer copy.
SerializeResult serialize_for_send(std::mutex& gil, BackendSpec::Serialization mode,
                                   double generic_rate, const Payload& p) {
    SerializeResult out;
    if (mode == BackendSpec::Serialization::Generic) {
        std::lock_guard lock(gil);
        TimePoint t0 = Clock::now();
        out.buf = serialize(p);
        TimePoint target =
            t0 + std::chrono::nanoseconds(std::int64_t(double(out.buf.size()) / generic_rate * 1e9));
        if (Clock::now() < target) precise_sleep_until(target);
        out.t_serialize = std::chrono::duration<double>(Clock::now() - t0).count();
    } else {
        TimePoint t0 = Clock::now();
        out.buf = serialize(p);
        out.t_serialize = std::chrono::duration<double>(Clock::now() - t0).count();
    }
    return out;
}

TimePoint deadline_from(const SendOptions& opts) {
    return opts.timeout_s > 0
               ? Clock::now() + std::chrono::nanoseconds(std::int64_t(opts.timeout_s * 1e9))
               : TimePoint::max();
}

}  // namespace

Receipt PeerLink::send(const BackendSpec& spec, const FLMessage& m, const SendOptions& opts) {
    auto* link = shared_.get();
    Endpoint* ep = link->owner;
    TimePoint deadline = deadline_from(opts);

    Receipt r;
    r.peer = link->peer;

    std::uint64_t size = serialized_size(m.payload.params.size());
    bool store_route =
        spec.hybrid && route(size, spec.fallback_threshold) == Route::Store;

    // The below-threshold hybrid fallback is a plain direct-RPC send,
    // generic serialization included.
    BackendSpec::Serialization ser_mode =
        store_route ? BackendSpec::Serialization::RawBuffer
                    : (spec.hybrid ? BackendSpec::Serialization::Generic : spec.serialization);

    auto ser = serialize_for_send(ep->ser_gil_, ser_mode, spec.generic_ser_bytes_per_s, m.payload);
    r.t_serialize = ser.t_serialize;
    TrackedBytes payload_track(ep->ledger(), ser.buf.size());

    Envelope env;
    env.meta = m.meta;
    env.meta.receiver_id = link->peer;
    env.payload_bytes = ser.buf.size();

    TimePoint t0 = Clock::now();
    if (store_route) {
        if (!ep->store())
            throw ConfigError("hybrid backend requires a store (send to peer " +
                              std::to_string(link->peer) + ")");
        ObjectKey key;
        auto cached = ep->key_cache()->lookup(m.payload.version);
        if (cached) {
            key = *cached;
        } else {
            key = key_for_digest(m.payload.version, "r" + std::to_string(m.meta.round),
                                 ep->bucket());
            PutResult pr = ep->store()->put_if_absent(key, make_blob(std::move(ser.buf)));
            r.store_put = pr == PutResult::Uploaded;
            ep->key_cache()->insert(m.payload.version, key);
        }
        env.locator = StoreLocator{key};
        Bytes hdr = encode_envelope_header(env);
        if (hdr.size() > kMaxStoreEnvelopeBytes)
            throw Error("internal", "store envelope exceeds " +
                                        std::to_string(kMaxStoreEnvelopeBytes) + " bytes");
        TrackedBytes meta_track(ep->ledger(), kFramePrefixBytes + hdr.size() + kBodyLenBytes);
        r.bytes_on_wire = link->write_frame(hdr, {}, deadline);
    } else {
        env.locator = InlineLocator{};
        Bytes hdr = encode_envelope_header(env);
        TrackedBytes meta_track(ep->ledger(), kFramePrefixBytes + hdr.size() + kBodyLenBytes);
        r.bytes_on_wire = link->write_frame(hdr, ByteView(ser.buf), deadline);
    }
    r.t_comm = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

// ---------------------------------------------------------------------------
// Endpoint
// ---------------------------------------------------------------------------

Endpoint::Endpoint(Options opts) : opts_(std::move(opts)) {
    if (!opts_.key_cache) opts_.key_cache = std::make_shared<KeyCache>();
    if (::pipe(wake_pipe_) != 0) throw Error("internal", "pipe() failed");

    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw Error("internal", "socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
        throw Error("internal", std::string("bind failed: ") + std::strerror(errno));
    if (::listen(listen_fd_, 64) != 0)
        throw Error("internal", std::string("listen failed: ") + std::strerror(errno));
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    address_ = "127.0.0.1:" + std::to_string(ntohs(addr.sin_port));

    accept_thread_ = std::thread([this] { accept_loop(); });
}

Endpoint::~Endpoint() { close(); }

void Endpoint::set_outbound_shaper(ParticipantId peer, std::shared_ptr<LinkShaper> shaper) {
    std::lock_guard lock(shapers_mu_);
    outbound_shapers_[peer] = std::move(shaper);
}

void Endpoint::accept_loop() {
    for (;;) {
        pollfd fds[2] = {{listen_fd_, POLLIN, 0}, {wake_pipe_[0], POLLIN, 0}};
        if (::poll(fds, 2, -1) < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (closing_.load()) break;
        if (!(fds[0].revents & POLLIN)) continue;
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (closing_.load()) break;
            continue;
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));

        // Hello: magic | peer id u32 | link nonce u64 | chan index u16 |
        // n_conns u16 | peer outbound shaped u8.
        std::uint8_t hello[4 + 4 + 8 + 2 + 2 + 1];
        if (!read_fd_all(fd, hello, sizeof(hello)) ||
            std::memcmp(hello, kHelloMagic, 4) != 0) {
            ::close(fd);
            continue;
        }
        ParticipantId peer = get_u32_at(hello + 4);
        std::uint64_t nonce = get_u64_at(hello + 8);
        std::uint16_t index = std::uint16_t(hello[16]) | (std::uint16_t(hello[17]) << 8);
        std::uint16_t total = std::uint16_t(hello[18]) | (std::uint16_t(hello[19]) << 8);
        bool peer_out_shaped = hello[20] != 0;
        if (total == 0 || index >= total) {
            ::close(fd);
            continue;
        }

        std::shared_ptr<LinkShaper> my_shaper;
        {
            std::lock_guard lock(shapers_mu_);
            auto it = outbound_shapers_.find(peer);
            if (it != outbound_shapers_.end()) my_shaper = it->second;
        }
        if (my_shaper && my_shaper->unlimited()) my_shaper = nullptr;

        std::uint8_t ack[4 + 4 + 1];
        std::memcpy(ack, kAckMagic, 4);
        put_u32_at(ack + 4, opts_.id);
        ack[8] = my_shaper ? 1 : 0;
        try {
            write_fd_all(fd, ack, sizeof(ack));
        } catch (const Error&) {
            ::close(fd);
            continue;
        }

        auto conn = std::make_unique<detail::Conn>();
        conn->fd = fd;
        conn->in_shaped = peer_out_shaped;
        conn->out_shaped = my_shaper != nullptr;
        if (my_shaper) {
            conn->out_channel = my_shaper->open_channel();
            conn->out_quantum = my_shaper->chunk_quantum();
        }

        // Group connections of one link by (peer, nonce).
        std::lock_guard lock(links_mu_);
        std::shared_ptr<detail::LinkShared> link;
        for (auto& p : pending_) {
            if (p->peer == peer && p->conns.size() == total && p->nonce == nonce) {
                link = p;
                break;
            }
        }
        if (!link) {
            link = std::make_shared<detail::LinkShared>();
            link->owner = this;
            link->peer = peer;
            link->nonce = nonce;
            link->conns.resize(total);
            pending_.push_back(link);
        }
        link->conns[index] = std::move(conn);
        bool complete = true;
        for (auto& c : link->conns)
            if (!c) complete = false;
        if (complete) {
            pending_.erase(std::remove(pending_.begin(), pending_.end(), link), pending_.end());
            link->start();
            links_[peer] = std::shared_ptr<PeerLink>(new PeerLink(link));
            links_cv_.notify_all();
        }
    }
}

std::shared_ptr<PeerLink> Endpoint::connect(const std::string& address,
                                            ParticipantId expected_peer, int n_conns,
                                            std::shared_ptr<LinkShaper> out_shaper) {
    if (n_conns < 1) throw ConfigError("connect: n_conns must be >= 1");
    auto colon = address.rfind(':');
    if (colon == std::string::npos) throw PeerUnreachableError("address must be host:port: " + address);
    std::string host = address.substr(0, colon);
    int port = std::stoi(address.substr(colon + 1));
    if (out_shaper && out_shaper->unlimited()) out_shaper = nullptr;

    std::random_device rd;
    std::uint64_t nonce = (std::uint64_t(rd()) << 32) ^ rd();

    auto link = std::make_shared<detail::LinkShared>();
    link->owner = this;
    link->nonce = nonce;
    link->conns.resize(std::size_t(n_conns));

    for (int i = 0; i < n_conns; i++) {
        int fd = tcp_connect(host, std::uint16_t(port));
        std::uint8_t hello[4 + 4 + 8 + 2 + 2 + 1];
        std::memcpy(hello, kHelloMagic, 4);
        put_u32_at(hello + 4, opts_.id);
        put_u64_at(hello + 8, nonce);
        hello[16] = std::uint8_t(i);
        hello[17] = std::uint8_t(i >> 8);
        hello[18] = std::uint8_t(n_conns);
        hello[19] = std::uint8_t(n_conns >> 8);
        hello[20] = out_shaper ? 1 : 0;
        write_fd_all(fd, hello, sizeof(hello));

        std::uint8_t ack[4 + 4 + 1];
        if (!read_fd_all(fd, ack, sizeof(ack)) || std::memcmp(ack, kAckMagic, 4) != 0) {
            ::close(fd);
            throw PeerUnreachableError("handshake with " + address + " failed");
        }
        ParticipantId peer = get_u32_at(ack + 4);
        if (expected_peer != 0 && peer != expected_peer)
            throw PeerUnreachableError("peer at " + address + " identifies as " +
                                       std::to_string(peer) + ", expected " +
                                       std::to_string(expected_peer));
        link->peer = peer;
        bool peer_out_shaped = ack[8] != 0;

        auto conn = std::make_unique<detail::Conn>();
        conn->fd = fd;
        conn->in_shaped = peer_out_shaped;
        conn->out_shaped = out_shaper != nullptr;
        if (out_shaper) {
            conn->out_channel = out_shaper->open_channel();
            conn->out_quantum = out_shaper->chunk_quantum();
        }
        link->conns[std::size_t(i)] = std::move(conn);
    }
    link->start();

    auto handle = std::shared_ptr<PeerLink>(new PeerLink(link));
    std::lock_guard lock(links_mu_);
    links_[link->peer] = handle;
    links_cv_.notify_all();
    return handle;
}

std::shared_ptr<PeerLink> Endpoint::await_link(ParticipantId peer, double timeout_s) {
    std::unique_lock lock(links_mu_);
    bool ok = links_cv_.wait_for(lock, std::chrono::duration<double>(timeout_s), [&] {
        return links_.count(peer) > 0 || closing_.load();
    });
    if (!ok || !links_.count(peer))
        throw PeerUnreachableError("no link from peer " + std::to_string(peer));
    return links_[peer];
}

std::shared_ptr<PeerLink> Endpoint::find_link(ParticipantId peer) {
    std::lock_guard lock(links_mu_);
    auto it = links_.find(peer);
    if (it == links_.end())
        throw PeerUnreachableError("no established link to peer " + std::to_string(peer));
    return it->second;
}

void Endpoint::deliver(std::variant<Delivery, std::exception_ptr> item) {
    std::lock_guard lock(deliveries_mu_);
    deliveries_.push_back(std::move(item));
    deliveries_cv_.notify_one();
}

Endpoint::Delivery Endpoint::recv_delivery() {
    std::unique_lock lock(deliveries_mu_);
    deliveries_cv_.wait(lock, [this] { return !deliveries_.empty() || closing_.load(); });
    if (deliveries_.empty()) throw Error("endpoint-closed", "endpoint closed while receiving");
    auto item = std::move(deliveries_.front());
    deliveries_.pop_front();
    lock.unlock();
    deliveries_cv_.notify_all();  // wake drain()
    if (auto* err = std::get_if<std::exception_ptr>(&item)) std::rethrow_exception(*err);
    return std::move(std::get<Delivery>(item));
}

FLMessage Endpoint::recv() { return recv_delivery().msg; }

std::optional<Endpoint::Delivery> Endpoint::recv_delivery_for(double timeout_s) {
    std::unique_lock lock(deliveries_mu_);
    bool got = deliveries_cv_.wait_for(lock, std::chrono::duration<double>(timeout_s),
                                       [this] { return !deliveries_.empty() || closing_.load(); });
    if (!got || deliveries_.empty()) {
        if (closing_.load()) throw Error("endpoint-closed", "endpoint closed while receiving");
        return std::nullopt;
    }
    auto item = std::move(deliveries_.front());
    deliveries_.pop_front();
    lock.unlock();
    deliveries_cv_.notify_all();
    if (auto* err = std::get_if<std::exception_ptr>(&item)) std::rethrow_exception(*err);
    return std::move(std::get<Delivery>(item));
}

Receipt Endpoint::send(const BackendSpec& spec, ParticipantId peer, const FLMessage& m,
                       const SendOptions& opts) {
    return find_link(peer)->send(spec, m, opts);
}

void Endpoint::drain() {
    std::unique_lock lock(deliveries_mu_);
    deliveries_cv_.wait(lock, [this] { return deliveries_.empty() || closing_.load(); });
}

void Endpoint::close() {
    bool expected = false;
    if (!closing_.compare_exchange_strong(expected, true)) return;
    char byte = 'x';
    [[maybe_unused]] ssize_t n = ::write(wake_pipe_[1], &byte, 1);
    if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
    if (accept_thread_.joinable()) accept_thread_.join();
    if (listen_fd_ >= 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
    }

    std::vector<std::shared_ptr<PeerLink>> links;
    {
        std::lock_guard lock(links_mu_);
        for (auto& kv : links_) links.push_back(kv.second);
        links_cv_.notify_all();
    }
    for (auto& l : links) l->shared_->close();
    {
        std::lock_guard lock(links_mu_);
        pending_.clear();
    }
    ::close(wake_pipe_[0]);
    ::close(wake_pipe_[1]);
    deliveries_cv_.notify_all();
}

// ---------------------------------------------------------------------------
// Receive-side assembly
// ---------------------------------------------------------------------------

namespace detail {

void LinkShared::assemble_loop() {
    auto& c0 = *conns[0];
    auto report_eof = [&] {
        // EOF outside a clean local close means the peer went away while
        // the consumer may still be waiting.
        if (!owner->closing_.load() && !closed.load())
            owner->deliver(std::make_exception_ptr(
                PeerUnreachableError("link to peer " + std::to_string(peer) + " closed")));
    };
    for (;;) {
        std::uint8_t prefix[kFramePrefixBytes];
        TimePoint t_first{};
        if (!c0.read_exact(prefix, sizeof(prefix), &t_first)) {
            report_eof();
            break;
        }
        try {
            if (std::memcmp(prefix, kFrameMagic, 4) != 0)
                throw MalformedPayloadError(0, "bad frame magic");
            std::uint32_t hdr_len = get_u32_at(prefix + 4);
            if (hdr_len > kMaxStoreEnvelopeBytes + kPayloadHeaderBytes + 64)
                throw MalformedPayloadError(4, "implausible frame header length " +
                                                   std::to_string(hdr_len));
            Bytes hdr(hdr_len);
            if (!c0.read_exact(hdr.data(), hdr_len)) {
                report_eof();
                break;
            }
            std::uint8_t blen[kBodyLenBytes];
            if (!c0.read_exact(blen, sizeof(blen))) {
                report_eof();
                break;
            }
            std::uint64_t body_len = get_u64_at(blen);

            Envelope env = decode_envelope_header(hdr);

            Bytes body(body_len);
            TrackedBytes body_track(owner->ledger(), body_len);
            std::size_t K = conns.size();
            std::size_t base = body_len / K;
            std::size_t rem = body_len % K;
            bool eof = false;
            std::size_t offset = 0;
            for (std::size_t i = 0; i < K && !eof; i++) {
                std::size_t len = base + (i < rem ? 1 : 0);
                if (len > 0 && !conns[i]->read_exact(body.data() + offset, len)) eof = true;
                offset += len;
            }
            if (eof) {
                report_eof();
                break;
            }

            Endpoint::Delivery d;
            d.from = peer;
            d.bytes_on_wire = kFramePrefixBytes + hdr_len + kBodyLenBytes + body_len;

            FLMessage msg;
            TimePoint t_decode_start;
            if (env.is_inline()) {
                t_decode_start = Clock::now();
                d.wire_time = std::chrono::duration<double>(t_decode_start - t_first).count();
                env.locator = InlineLocator{std::move(body)};
                body_track.reset();
                msg = join(env, std::nullopt);
            } else {
                if (!owner->store())
                    throw ConfigError("received a StoreKey envelope but this endpoint has no store");
                const auto& key = std::get<StoreLocator>(env.locator).key;
                Blob blob = owner->store()->get(key, owner->fetch_retry(), &d.fetch_retries);
                t_decode_start = Clock::now();
                d.wire_time = std::chrono::duration<double>(t_decode_start - t_first).count();
                msg = join(env, ByteView(*blob));
            }
            d.decode_time = std::chrono::duration<double>(Clock::now() - t_decode_start).count();
            d.msg = std::move(msg);
            owner->deliver(std::move(d));
        } catch (...) {
            owner->deliver(std::current_exception());
            // Frame boundaries are intact for fetch/decode errors; keep serving.
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Broadcast
// ---------------------------------------------------------------------------

BroadcastStats Endpoint::broadcast(const BackendSpec& spec,
                                   const std::vector<std::shared_ptr<PeerLink>>& peers,
                                   const FLMessage& m, DispatchMode mode,
                                   const SendOptions& opts) {
    if (peers.empty()) throw ConfigError("broadcast: need at least one peer");
    TimePoint deadline = deadline_from(opts);
    ledger_.begin_window();
    TimePoint t0 = Clock::now();

    BroadcastStats stats;
    stats.receipts.resize(peers.size());

    std::uint64_t size = serialized_size(m.payload.params.size());
    bool store_route = spec.hybrid && route(size, spec.fallback_threshold) == Route::Store;
    bool shared_buffer = store_route || (!spec.hybrid && spec.buffering == BackendSpec::Buffering::SharedBuffer);

    if (shared_buffer) {
        // One serialization; hybrid uploads once and ships envelopes only.
        auto ser = serialize_for_send(ser_gil_,
                                      store_route ? BackendSpec::Serialization::RawBuffer
                                                  : spec.serialization,
                                      spec.generic_ser_bytes_per_s, m.payload);
        TrackedBytes payload_track(ledger_, ser.buf.size());

        ObjectKey key;
        bool uploaded = false;
        Bytes shared_body;
        if (store_route) {
            if (!opts_.store) throw ConfigError("hybrid broadcast requires a store");
            auto cached = opts_.key_cache->lookup(m.payload.version);
            if (cached) {
                key = *cached;
            } else {
                key = key_for_digest(m.payload.version, "r" + std::to_string(m.meta.round),
                                     opts_.bucket);
                uploaded = opts_.store->put_if_absent(key, make_blob(std::move(ser.buf))) ==
                           PutResult::Uploaded;
                opts_.key_cache->insert(m.payload.version, key);
            }
        } else {
            shared_body = std::move(ser.buf);
        }

        auto send_one = [&](std::size_t i) {
            Receipt& r = stats.receipts[i];
            r.peer = peers[i]->peer_id();
            r.t_serialize = i == 0 ? ser.t_serialize : 0;
            r.store_put = store_route && uploaded && i == 0;
            try {
                Envelope env;
                env.meta = m.meta;
                env.meta.receiver_id = r.peer;
                env.payload_bytes = size;
                env.locator = store_route ? Locator(StoreLocator{key}) : Locator(InlineLocator{});
                Bytes hdr = encode_envelope_header(env);
                TrackedBytes meta_track(ledger_, kFramePrefixBytes + hdr.size() + kBodyLenBytes);
                TimePoint ts = Clock::now();
                r.bytes_on_wire = peers[i]->shared_->write_frame(
                    hdr, store_route ? ByteView{} : ByteView(shared_body), deadline);
                r.t_comm = std::chrono::duration<double>(Clock::now() - ts).count();
            } catch (const Error& e) {
                r.ok = false;
                r.error = e.kind() + ": " + e.what();
            } catch (const std::exception& e) {
                r.ok = false;
                r.error = e.what();
            }
        };

        if (mode == DispatchMode::Sequential) {
            for (std::size_t i = 0; i < peers.size(); i++) send_one(i);
        } else {
            std::vector<std::thread> workers;
            workers.reserve(peers.size());
            for (std::size_t i = 0; i < peers.size(); i++)
                workers.emplace_back([&, i] { send_one(i); });
            for (auto& w : workers) w.join();
        }
    } else {
        // Copy-per-send path: grpc/mpi_generic presets and the hybrid
        // below-threshold fallback. Each dispatch serializes its own copy.
        double ser_rate = spec.generic_ser_bytes_per_s;
        BackendSpec::Serialization ser_mode =
            spec.hybrid ? BackendSpec::Serialization::Generic : spec.serialization;

        auto transmit = [&](std::size_t i, Bytes buf, [[maybe_unused]] TrackedBytes track) {
            Receipt& r = stats.receipts[i];
            try {
                Envelope env;
                env.meta = m.meta;
                env.meta.receiver_id = r.peer;
                env.payload_bytes = buf.size();
                env.locator = InlineLocator{};
                Bytes hdr = encode_envelope_header(env);
                TrackedBytes meta_track(ledger_, kFramePrefixBytes + hdr.size() + kBodyLenBytes);
                TimePoint ts = Clock::now();
                r.bytes_on_wire = peers[i]->shared_->write_frame(hdr, ByteView(buf), deadline);
                r.t_comm = std::chrono::duration<double>(Clock::now() - ts).count();
            } catch (const Error& e) {
                r.ok = false;
                r.error = e.kind() + ": " + e.what();
            } catch (const std::exception& e) {
                r.ok = false;
                r.error = e.what();
            }
        };

        if (mode == DispatchMode::Sequential) {
            for (std::size_t i = 0; i < peers.size(); i++) {
                stats.receipts[i].peer = peers[i]->peer_id();
                auto ser = serialize_for_send(ser_gil_, ser_mode, ser_rate, m.payload);
                stats.receipts[i].t_serialize = ser.t_serialize;
                TrackedBytes track(ledger_, ser.buf.size());
                transmit(i, std::move(ser.buf), std::move(track));
            }
        } else {
            // Dispatch all sends before awaiting any completion: every
            // per-send copy is allocated here, in dispatch order.
            std::vector<std::thread> workers;
            workers.reserve(peers.size());
            for (std::size_t i = 0; i < peers.size(); i++) {
                stats.receipts[i].peer = peers[i]->peer_id();
                auto ser = serialize_for_send(ser_gil_, ser_mode, ser_rate, m.payload);
                stats.receipts[i].t_serialize = ser.t_serialize;
                TrackedBytes track(ledger_, ser.buf.size());
                workers.emplace_back(
                    [&transmit, i, buf = std::move(ser.buf), t = std::move(track)]() mutable {
                        transmit(i, std::move(buf), std::move(t));
                    });
            }
            for (auto& w : workers) w.join();
        }
    }

    stats.wall_clock = std::chrono::duration<double>(Clock::now() - t0).count();
    stats.ledger_peak = ledger_.window_peak();
    for (const auto& r : stats.receipts)
        if (!r.ok) stats.failed.emplace_back(r.peer, r.error);
    return stats;
}

}  // namespace silocomm
