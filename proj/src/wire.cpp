#include "ews/wire.hpp"

#include <array>

namespace ews::wire {

namespace {

constexpr std::array<std::uint16_t, 256> make_crc_table() {
  std::array<std::uint16_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint16_t crc = static_cast<std::uint16_t>(i << 8);
    for (int bit = 0; bit < 8; ++bit) {
      crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021)
                           : static_cast<std::uint16_t>(crc << 1);
    }
    table[i] = crc;
  }
  return table;
}

constexpr auto kCrcTable = make_crc_table();

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v >> 8));
    u8(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v >> 16));
    u16(static_cast<std::uint16_t>(v));
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v >> 32));
    u32(static_cast<std::uint32_t>(v));
  }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  Reader(ByteView data, std::string_view what) : data_(data), what_(what) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() {
    std::uint16_t hi = u8();
    return static_cast<std::uint16_t>((hi << 8) | u8());
  }
  std::uint32_t u32() {
    std::uint32_t hi = u16();
    return (hi << 16) | u16();
  }
  std::uint64_t u64() {
    std::uint64_t hi = u32();
    return (hi << 32) | u32();
  }
  void finish() const {
    if (pos_ != data_.size()) {
      throw PayloadError(std::string(what_) + ": " + std::to_string(data_.size() - pos_) +
                         " trailing bytes");
    }
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw PayloadError(std::string(what_) + ": truncated at byte " + std::to_string(pos_));
    }
  }

  ByteView data_;
  std::string_view what_;
  std::size_t pos_ = 0;
};

bool known_type(std::uint8_t code) { return code >= 0x01 && code <= 0x09; }

template <class>
inline constexpr bool kAlwaysFalse = false;

}  // namespace

std::string_view message_name(MessageType t) {
  switch (t) {
    case MessageType::ReqIp: return "REQIP";
    case MessageType::IpAssign: return "IPASSIGN";
    case MessageType::SendIp: return "SENDIP";
    case MessageType::ServerIp: return "SERVERIP";
    case MessageType::ReqConn: return "REQCONN";
    case MessageType::ConnAck: return "CONNACK";
    case MessageType::SendData: return "SENDDATA";
    case MessageType::DataAck: return "DATAACK";
    case MessageType::Heartbeat: return "HEARTBEAT";
  }
  return "UNKNOWN";
}

std::string_view frame_error_name(FrameErrorKind k) {
  switch (k) {
    case FrameErrorKind::BadMagic: return "BadMagic";
    case FrameErrorKind::BadVersion: return "BadVersion";
    case FrameErrorKind::LengthMismatch: return "LengthMismatch";
    case FrameErrorKind::CrcMismatch: return "CrcMismatch";
    case FrameErrorKind::UnknownType: return "UnknownType";
  }
  return "Unknown";
}

FrameError::FrameError(FrameErrorKind kind, std::size_t offset, const std::string& detail)
    : Error(std::string(frame_error_name(kind)) + " at byte " + std::to_string(offset) + ": " +
            detail),
      kind_(kind),
      offset_(offset) {}

std::uint16_t crc16(ByteView data) {
  std::uint16_t crc = 0xFFFF;
  for (std::uint8_t b : data) {
    crc = static_cast<std::uint16_t>((crc << 8) ^ kCrcTable[((crc >> 8) ^ b) & 0xFF]);
  }
  return crc;
}

std::uint16_t crc16(std::string_view text) {
  return crc16(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Bytes encode_frame(const Frame& f) {
  if (f.payload.size() > kMaxPayload) {
    throw FrameTooLarge("payload of " + std::to_string(f.payload.size()) +
                        " bytes exceeds 65535");
  }
  Bytes out;
  out.reserve(kHeaderSize + f.payload.size() + kTrailerSize);
  out.push_back(kMagic0);
  out.push_back(kMagic1);
  out.push_back(f.version);
  out.push_back(static_cast<std::uint8_t>(f.type));
  out.push_back(static_cast<std::uint8_t>(f.payload.size() >> 8));
  out.push_back(static_cast<std::uint8_t>(f.payload.size()));
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  const std::uint16_t crc = crc16(ByteView(out).subspan(2));
  out.push_back(static_cast<std::uint8_t>(crc >> 8));
  out.push_back(static_cast<std::uint8_t>(crc));
  return out;
}

Frame decode_frame(ByteView bytes) {
  const std::size_t n = bytes.size();
  if (n < 2) throw FrameError(FrameErrorKind::LengthMismatch, n, "missing magic");
  if (bytes[0] != kMagic0) throw FrameError(FrameErrorKind::BadMagic, 0, "bad magic byte");
  if (bytes[1] != kMagic1) throw FrameError(FrameErrorKind::BadMagic, 1, "bad magic byte");
  if (n < 3) throw FrameError(FrameErrorKind::LengthMismatch, n, "missing version");
  if (bytes[2] != kVersion) {
    throw FrameError(FrameErrorKind::BadVersion, 2,
                     "unsupported version " + std::to_string(bytes[2]));
  }
  if (n < kHeaderSize) throw FrameError(FrameErrorKind::LengthMismatch, n, "short header");
  const std::size_t len = (std::size_t{bytes[4]} << 8) | bytes[5];
  const std::size_t expected = kHeaderSize + len + kTrailerSize;
  if (n != expected) {
    throw FrameError(FrameErrorKind::LengthMismatch, 4,
                     "length field says " + std::to_string(expected) + " bytes, got " +
                         std::to_string(n));
  }
  const std::uint16_t want =
      static_cast<std::uint16_t>((std::uint16_t{bytes[n - 2]} << 8) | bytes[n - 1]);
  const std::uint16_t got = crc16(bytes.subspan(2, n - 2 - kTrailerSize));
  if (want != got) throw FrameError(FrameErrorKind::CrcMismatch, n - 2, "crc mismatch");
  if (!known_type(bytes[3])) {
    throw FrameError(FrameErrorKind::UnknownType, 3,
                     "unknown message type " + std::to_string(bytes[3]));
  }
  Frame f;
  f.version = bytes[2];
  f.type = static_cast<MessageType>(bytes[3]);
  f.payload.assign(bytes.begin() + kHeaderSize, bytes.end() - kTrailerSize);
  return f;
}

std::size_t frame_size_from_header(ByteView header) {
  if (header.size() < kHeaderSize || header[0] != kMagic0 || header[1] != kMagic1) return 0;
  return kHeaderSize + ((std::size_t{header[4]} << 8) | header[5]) + kTrailerSize;
}

std::string Ipv4::to_string() const {
  return std::to_string(value >> 24) + "." + std::to_string((value >> 16) & 0xFF) + "." +
         std::to_string((value >> 8) & 0xFF) + "." + std::to_string(value & 0xFF);
}

Ipv4 Ipv4::from_octets(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
  return Ipv4{(std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d};
}

Bytes encode_senddata(const SendDataPayload& p) {
  if (p.readings.size() > kMaxReadingsPerBatch) {
    throw PayloadError("SENDDATA carries at most 255 readings, got " +
                       std::to_string(p.readings.size()));
  }
  Writer w;
  w.u32(p.session_id);
  w.u32(p.seq);
  w.u64(p.timestamp);
  w.u8(static_cast<std::uint8_t>(p.readings.size()));
  for (const auto& r : p.readings) {
    w.u8(wire_code(r.sensor));
    w.u32(static_cast<std::uint32_t>(r.raw));
  }
  return w.take();
}

SendDataPayload decode_senddata(ByteView bytes) {
  Reader r(bytes, "SENDDATA");
  SendDataPayload p;
  p.session_id = r.u32();
  p.seq = r.u32();
  p.timestamp = r.u64();
  const std::size_t count = r.u8();
  const std::size_t body = bytes.size() - 17;
  if (body != count * 5) {
    throw PayloadError("SENDDATA count " + std::to_string(count) + " does not match " +
                       std::to_string(body) + " reading bytes");
  }
  p.readings.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t code = r.u8();
    auto kind = sensor_from_code(code);
    if (!kind) {
      throw PayloadError("SENDDATA reading " + std::to_string(i) + " has unknown sensor code " +
                         std::to_string(code));
    }
    p.readings.push_back({*kind, static_cast<std::int32_t>(r.u32())});
  }
  r.finish();
  return p;
}

MessageType packet_type(const Packet& p) {
  return std::visit(
      [](const auto& v) -> MessageType {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ReqIpPayload>) return MessageType::ReqIp;
        else if constexpr (std::is_same_v<T, IpAssignPayload>) return MessageType::IpAssign;
        else if constexpr (std::is_same_v<T, SendIpPayload>) return MessageType::SendIp;
        else if constexpr (std::is_same_v<T, ServerIpPayload>) return MessageType::ServerIp;
        else if constexpr (std::is_same_v<T, ReqConnPayload>) return MessageType::ReqConn;
        else if constexpr (std::is_same_v<T, ConnAckPayload>) return MessageType::ConnAck;
        else if constexpr (std::is_same_v<T, SendDataPayload>) return MessageType::SendData;
        else if constexpr (std::is_same_v<T, DataAckPayload>) return MessageType::DataAck;
        else if constexpr (std::is_same_v<T, HeartbeatPayload>) return MessageType::Heartbeat;
        else static_assert(kAlwaysFalse<T>);
      },
      p);
}

Frame to_frame(const Packet& p) {
  Frame f;
  f.type = packet_type(p);
  Writer w;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ReqIpPayload>) {
          w.u16(v.node_id);
        } else if constexpr (std::is_same_v<T, IpAssignPayload> ||
                             std::is_same_v<T, ServerIpPayload>) {
          w.u32(v.ip.value);
        } else if constexpr (std::is_same_v<T, SendIpPayload>) {
          w.u16(v.node_id);
          w.u32(v.ip.value);
        } else if constexpr (std::is_same_v<T, ReqConnPayload>) {
          w.u16(v.node_id);
          w.u32(v.nonce);
        } else if constexpr (std::is_same_v<T, ConnAckPayload>) {
          w.u32(v.session_id);
          w.u32(v.nonce);
        } else if constexpr (std::is_same_v<T, DataAckPayload>) {
          w.u32(v.session_id);
          w.u32(v.seq);
        }
      },
      p);
  if (const auto* data = std::get_if<SendDataPayload>(&p)) {
    f.payload = encode_senddata(*data);
  } else {
    f.payload = w.take();
  }
  return f;
}

Packet from_frame(const Frame& f) {
  const ByteView body(f.payload);
  Reader r(body, message_name(f.type));
  Packet out;
  switch (f.type) {
    case MessageType::ReqIp:
      out = ReqIpPayload{r.u16()};
      break;
    case MessageType::IpAssign:
      out = IpAssignPayload{Ipv4{r.u32()}};
      break;
    case MessageType::SendIp: {
      SendIpPayload p;
      p.node_id = r.u16();
      p.ip = Ipv4{r.u32()};
      out = p;
      break;
    }
    case MessageType::ServerIp:
      out = ServerIpPayload{Ipv4{r.u32()}};
      break;
    case MessageType::ReqConn: {
      ReqConnPayload p;
      p.node_id = r.u16();
      p.nonce = r.u32();
      out = p;
      break;
    }
    case MessageType::ConnAck: {
      ConnAckPayload p;
      p.session_id = r.u32();
      p.nonce = r.u32();
      out = p;
      break;
    }
    case MessageType::SendData:
      return decode_senddata(body);
    case MessageType::DataAck: {
      DataAckPayload p;
      p.session_id = r.u32();
      p.seq = r.u32();
      out = p;
      break;
    }
    case MessageType::Heartbeat:
      out = HeartbeatPayload{};
      break;
  }
  r.finish();
  return out;
}

}  // namespace ews::wire
