#pragma once

// Binary framing for the telemetry link.
//
// Frame layout (all integers big-endian):
//
//   offset  size  field
//   0       2     magic 0x4C 0x53 ("LS")
//   2       1     version (0x01)
//   3       1     message type
//   4       2     payload length N
//   6       N     payload
//   6+N     2     CRC-16/CCITT-FALSE over bytes [2, 6+N)
//
// See docs/wire_format.md for the per-message payload layouts.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ews/domain.hpp"

namespace ews::wire {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline constexpr std::uint8_t kMagic0 = 0x4C;
inline constexpr std::uint8_t kMagic1 = 0x53;
inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::size_t kHeaderSize = 6;
inline constexpr std::size_t kTrailerSize = 2;
inline constexpr std::size_t kMaxPayload = 0xFFFF;
inline constexpr std::size_t kMaxReadingsPerBatch = 255;

enum class MessageType : std::uint8_t {
  ReqIp = 0x01,
  IpAssign = 0x02,
  SendIp = 0x03,
  ServerIp = 0x04,
  ReqConn = 0x05,
  ConnAck = 0x06,
  SendData = 0x07,
  DataAck = 0x08,
  Heartbeat = 0x09,
};

std::string_view message_name(MessageType t);

struct Frame {
  std::uint8_t version = kVersion;
  MessageType type = MessageType::Heartbeat;
  Bytes payload;

  friend bool operator==(const Frame&, const Frame&) = default;
};

enum class FrameErrorKind { BadMagic, BadVersion, LengthMismatch, CrcMismatch, UnknownType };

std::string_view frame_error_name(FrameErrorKind k);

class FrameError : public Error {
 public:
  FrameError(FrameErrorKind kind, std::size_t offset, const std::string& detail);

  FrameErrorKind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  FrameErrorKind kind_;
  std::size_t offset_;
};

class FrameTooLarge : public Error {
 public:
  using Error::Error;
};

// Malformed payload for an otherwise valid frame.
class PayloadError : public Error {
 public:
  using Error::Error;
};

// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.
std::uint16_t crc16(ByteView data);
std::uint16_t crc16(std::string_view text);

Bytes encode_frame(const Frame& f);
Frame decode_frame(ByteView bytes);

// Total encoded size announced by a 6-byte header, or 0 if the header does not
// start with the magic bytes.
std::size_t frame_size_from_header(ByteView header);

struct Ipv4 {
  std::uint32_t value = 0;

  std::string to_string() const;
  static Ipv4 from_octets(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d);
  friend bool operator==(const Ipv4&, const Ipv4&) = default;
};

struct ReqIpPayload {
  NodeId node_id = 0;
  friend bool operator==(const ReqIpPayload&, const ReqIpPayload&) = default;
};

struct IpAssignPayload {
  Ipv4 ip;
  friend bool operator==(const IpAssignPayload&, const IpAssignPayload&) = default;
};

// The out-of-band announcement: carries the node's freshly assigned address
// and doubles as the request for the server address.
struct SendIpPayload {
  NodeId node_id = 0;
  Ipv4 ip;
  friend bool operator==(const SendIpPayload&, const SendIpPayload&) = default;
};

struct ServerIpPayload {
  Ipv4 ip;
  friend bool operator==(const ServerIpPayload&, const ServerIpPayload&) = default;
};

struct ReqConnPayload {
  NodeId node_id = 0;
  std::uint32_t nonce = 0;
  friend bool operator==(const ReqConnPayload&, const ReqConnPayload&) = default;
};

struct ConnAckPayload {
  std::uint32_t session_id = 0;
  std::uint32_t nonce = 0;
  friend bool operator==(const ConnAckPayload&, const ConnAckPayload&) = default;
};

struct WireReading {
  SensorKind sensor = SensorKind::RainGauge;
  std::int32_t raw = 0;
  friend bool operator==(const WireReading&, const WireReading&) = default;
};

// One batch of readings sharing a timestamp. Reading i carries sequence
// number seq + i.
struct SendDataPayload {
  std::uint32_t session_id = 0;
  Seq seq = 0;
  std::uint64_t timestamp = 0;
  std::vector<WireReading> readings;
  friend bool operator==(const SendDataPayload&, const SendDataPayload&) = default;
};

struct DataAckPayload {
  std::uint32_t session_id = 0;
  Seq seq = 0;
  friend bool operator==(const DataAckPayload&, const DataAckPayload&) = default;
};

struct HeartbeatPayload {
  friend bool operator==(const HeartbeatPayload&, const HeartbeatPayload&) = default;
};

Bytes encode_senddata(const SendDataPayload& p);
SendDataPayload decode_senddata(ByteView bytes);

using Packet = std::variant<ReqIpPayload, IpAssignPayload, SendIpPayload, ServerIpPayload,
                            ReqConnPayload, ConnAckPayload, SendDataPayload, DataAckPayload,
                            HeartbeatPayload>;

MessageType packet_type(const Packet& p);
Frame to_frame(const Packet& p);
Packet from_frame(const Frame& f);

// Convenience wrappers over the two steps above.
inline Bytes encode_packet(const Packet& p) { return encode_frame(to_frame(p)); }
inline Packet decode_packet(ByteView bytes) { return from_frame(decode_frame(bytes)); }

}  // namespace ews::wire
