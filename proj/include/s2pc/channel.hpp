#pragma once

// Framed in-memory links between roles, with per-link byte meters and a
// running SHA-256 over every frame's wire bytes.

#include <openssl/evp.h>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "s2pc/ring.hpp"

namespace s2pc {

enum class Tag : std::uint8_t {
  YShares = 1,
  Aux = 2,
  UShare = 3,
  MultOpen = 4,
  TruncOpen = 5,
  KeyRefresh = 6,
  Params = 7,
  TruncCorrection = 8,
};

inline const char* tag_name(Tag t) {
  switch (t) {
    case Tag::YShares: return "y-shares";
    case Tag::Aux: return "aux";
    case Tag::UShare: return "u-share";
    case Tag::MultOpen: return "mult-open";
    case Tag::TruncOpen: return "trunc-open";
    case Tag::KeyRefresh: return "key-refresh";
    case Tag::Params: return "params";
    case Tag::TruncCorrection: return "trunc-correction";
  }
  return "unknown";
}

/// Payload of a key-refresh frame: 16-byte key then 8-byte epoch.
inline constexpr std::size_t kKeyRefreshPayload = 24;

struct Frame {
  Tag tag{};
  std::vector<std::uint8_t> payload;
  long step = -1;
  /// Accounting metadata, not transmitted.
  std::uint64_t ring_elements = 0;
  std::uint64_t payload_bits = 0;

  std::size_t wire_size() const {
    return tag == Tag::KeyRefresh ? 1 + payload.size() : 5 + payload.size();
  }
};

/// Tag, then (except for key refresh) a 4-byte big-endian length, then payload.
inline std::vector<std::uint8_t> encode_frame(const Frame& f) {
  std::vector<std::uint8_t> out;
  out.reserve(f.wire_size());
  out.push_back(static_cast<std::uint8_t>(f.tag));
  if (f.tag == Tag::KeyRefresh) {
    if (f.payload.size() != kKeyRefreshPayload) throw ProtocolAbort("malformed key-refresh frame");
  } else {
    const auto len = static_cast<std::uint32_t>(f.payload.size());
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  }
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

/// Splits a byte stream back into frames.
inline std::vector<Frame> decode_frames(std::span<const std::uint8_t> bytes) {
  std::vector<Frame> out;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    Frame f;
    const std::uint8_t t = bytes[pos++];
    if (t < 1 || t > 8) throw ProtocolAbort("unknown frame tag " + std::to_string(t));
    f.tag = static_cast<Tag>(t);
    std::size_t len = kKeyRefreshPayload;
    if (f.tag != Tag::KeyRefresh) {
      if (bytes.size() - pos < 4) throw ProtocolAbort("truncated frame header");
      len = 0;
      for (int i = 0; i < 4; ++i) len = (len << 8) | bytes[pos++];
    }
    if (bytes.size() - pos < len) throw ProtocolAbort("truncated frame payload");
    f.payload.assign(bytes.begin() + static_cast<long>(pos), bytes.begin() + static_cast<long>(pos + len));
    pos += len;
    out.push_back(std::move(f));
  }
  return out;
}

inline std::vector<std::uint8_t> pack_elements(std::span<const RingElement> v) {
  std::vector<std::uint8_t> out;
  if (!v.empty()) out.reserve(v.size() * v.front().modulus().byte_length());
  for (const auto& e : v) serialize(e, out);
  return out;
}

inline std::vector<RingElement> unpack_elements(std::span<const std::uint8_t> bytes, const Modulus& q,
                                                std::size_t expected, long step = -1) {
  const std::size_t w = q.byte_length();
  if (bytes.size() != expected * w) {
    throw ProtocolAbort("expected " + std::to_string(expected) + " ring elements, got " +
                            std::to_string(bytes.size()) + " bytes",
                        step);
  }
  std::vector<RingElement> out;
  out.reserve(expected);
  for (std::size_t i = 0; i < expected; ++i) out.push_back(deserialize(bytes.subspan(i * w, w), q));
  return out;
}

struct LinkMeter {
  std::uint64_t wire_bytes = 0;
  std::uint64_t frames = 0;
  std::uint64_t ring_elements = 0;
  std::uint64_t payload_bits = 0;

  LinkMeter& operator+=(const LinkMeter& o) {
    wire_bytes += o.wire_bytes;
    frames += o.frames;
    ring_elements += o.ring_elements;
    payload_bits += o.payload_bits;
    return *this;
  }
  friend bool operator==(const LinkMeter&, const LinkMeter&) = default;
};

/// One direction between two roles. Safe for one producer and one consumer
/// on different threads.
class Link {
 public:
  explicit Link(std::string name) : name_(std::move(name)), md_(EVP_MD_CTX_new()) {
    if (!md_ || EVP_DigestInit_ex(md_.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
  }

  const std::string& name() const { return name_; }

  void send(Frame f) {
    std::vector<std::uint8_t> wire = encode_frame(f);
    std::lock_guard lock(mu_);
    if (closed_) throw ProtocolAbort("link " + name_ + " closed", f.step);
    LinkMeter m{wire.size(), 1, f.ring_elements, f.payload_bits};
    total_ += m;
    per_step_[f.step] += m;
    EVP_DigestUpdate(md_.get(), wire.data(), wire.size());
    queue_.push_back(std::move(f));
    cv_.notify_all();
  }

  void send_elements(Tag tag, std::span<const RingElement> v, long step) {
    Frame f;
    f.tag = tag;
    f.payload = pack_elements(v);
    f.step = step;
    f.ring_elements = v.size();
    f.payload_bits = v.empty() ? 0 : v.size() * v.front().modulus().bit_length();
    send(std::move(f));
  }

  /// Blocks until a frame is available; aborts on a tag mismatch, a closed
  /// link, or after the timeout.
  Frame recv(Tag expected, long step) {
    std::unique_lock lock(mu_);
    if (!cv_.wait_for(lock, timeout_, [&] { return !queue_.empty() || closed_; })) {
      throw ProtocolAbort("timed out waiting for " + std::string(tag_name(expected)) + " on " + name_, step);
    }
    if (queue_.empty()) throw ProtocolAbort("link " + name_ + " closed", step);
    Frame f = std::move(queue_.front());
    queue_.pop_front();
    if (f.tag != expected) {
      throw ProtocolAbort("expected " + std::string(tag_name(expected)) + " on " + name_ + ", got " +
                              tag_name(f.tag),
                          step);
    }
    return f;
  }

  std::vector<RingElement> recv_elements(Tag expected, const Modulus& q, std::size_t count, long step) {
    Frame f = recv(expected, step);
    return unpack_elements(f.payload, q, count, step);
  }

  /// How long recv waits; zero suits a single-threaded scheduler, where a
  /// missing frame is an immediate protocol error.
  void set_timeout(std::chrono::milliseconds t) {
    std::lock_guard lock(mu_);
    timeout_ = t;
  }

  bool has_pending() const {
    std::lock_guard lock(mu_);
    return !queue_.empty();
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_.notify_all();
  }

  LinkMeter total() const {
    std::lock_guard lock(mu_);
    return total_;
  }

  LinkMeter at_step(long step) const {
    std::lock_guard lock(mu_);
    auto it = per_step_.find(step);
    return it == per_step_.end() ? LinkMeter{} : it->second;
  }

  /// SHA-256 over all wire bytes sent so far, as lowercase hex.
  std::string digest() const {
    std::lock_guard lock(mu_);
    std::unique_ptr<EVP_MD_CTX, MdDeleter> copy(EVP_MD_CTX_new());
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_MD_CTX_copy_ex(copy.get(), md_.get());
    EVP_DigestFinal_ex(copy.get(), out, &len);
    static const char* hex = "0123456789abcdef";
    std::string s;
    for (unsigned i = 0; i < len; ++i) {
      s.push_back(hex[out[i] >> 4]);
      s.push_back(hex[out[i] & 15]);
    }
    return s;
  }

 private:
  struct MdDeleter {
    void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
  };

  std::string name_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Frame> queue_;
  bool closed_ = false;
  std::chrono::milliseconds timeout_{std::chrono::seconds(30)};
  LinkMeter total_;
  std::map<long, LinkMeter> per_step_;
  std::unique_ptr<EVP_MD_CTX, MdDeleter> md_;
};

}  // namespace s2pc
