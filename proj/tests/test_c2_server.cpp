#include <gtest/gtest.h>

#include "c2lab/c2_server.hpp"
#include "c2lab/sim.hpp"

using namespace c2lab;

namespace {

constexpr const char* kPluginAgent = "WebReaderPlugin/1.0";

C2Server make_server(ExfilEncoding enc = ExfilEncoding::Base64) {
  UserAgentPolicy p;
  p.allowed_agents = {kPluginAgent};
  return C2Server(p, enc);
}

HttpRequest get(std::string path, std::string agent = kPluginAgent, std::uint16_t port = 40000) {
  return {"GET", std::move(path), std::move(agent), port};
}

}  // namespace

TEST(CommandBoard, PublishAndRender) {
  CommandBoard b;
  EXPECT_EQ(render_command_page(b), "edition 0\nno news today\n");
  publish_command(b, parse_command("shellCmd whoami"), VirtualTime{5});
  EXPECT_EQ(b.current, "shellCmd whoami");
  EXPECT_EQ(render_command_page(b), "edition 1\nshellCmd whoami\n");
  publish_command(b, parse_command("noop"), VirtualTime{5});
  EXPECT_EQ(b.edition(), 2u);
  EXPECT_THROW(publish_command(b, parse_command("noop"), VirtualTime{4}), Error);
  EXPECT_EQ(b.history.size(), 2u);
}

TEST(UserAgentPolicy, Validation) {
  UserAgentPolicy p;
  EXPECT_THROW(p.validate(), Error);
  p.cloaking = false;
  EXPECT_NO_THROW(p.validate());
  EXPECT_TRUE(p.admits("curl/8.0"));
}

TEST(C2Server, ServesPageToPluginAgent) {
  auto c2 = make_server();
  c2.publish(parse_command("shellCmd whoami && pwd && ls -a"), VirtualTime{30});
  const auto r = c2.handle_get(get("/"), VirtualTime{60});
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body, "edition 1\nshellCmd whoami && pwd && ls -a\n");
  EXPECT_TRUE(c2.exfil_log().records.empty());
}

TEST(C2Server, CloakingServesDecoyAndLogsNothing) {
  auto c2 = make_server();
  c2.publish(parse_command("shellCmd whoami"), VirtualTime{0});
  for (const char* agent : {"Mozilla/5.0", "curl/8.4.0", "", "webreaderplugin/1.0"}) {
    for (const char* path : {"/", "/ZXh0cmFjdGVkX2RhdGEK"}) {
      const auto r = c2.handle_get(get(path, agent), VirtualTime{1});
      EXPECT_EQ(r.body, c2.policy().decoy_body);
    }
  }
  EXPECT_TRUE(c2.exfil_log().records.empty());
}

TEST(C2Server, ExfilPathIsDecodedAndAcked) {
  auto c2 = make_server();
  const auto r = c2.handle_get(get("/ZXh0cmFjdGVkX2RhdGEK", kPluginAgent, 41000), VirtualTime{7});
  EXPECT_EQ(r.body, kAckBody);
  const auto log = c2.exfil_log();
  ASSERT_EQ(log.records.size(), 1u);
  EXPECT_EQ(log.records[0].at, VirtualTime{7});
  EXPECT_EQ(log.records[0].raw_path, "/ZXh0cmFjdGVkX2RhdGEK");
  EXPECT_EQ(to_text(*log.records[0].decoded), "extracted_data\n");
  EXPECT_EQ(log.records[0].source_port, 41000);
}

TEST(C2Server, MalformedExfilIsLoggedWithError) {
  auto c2 = make_server();
  EXPECT_EQ(c2.handle_get(get("/not*base64"), VirtualTime{1}).body, kAckBody);
  const auto log = c2.exfil_log();
  ASSERT_EQ(log.records.size(), 1u);
  EXPECT_FALSE(log.records[0].decoded);
  EXPECT_NE(log.records[0].error.find("MalformedEncoding"), std::string::npos);
}

TEST(C2Server, AsciiMode) {
  auto c2 = make_server(ExfilEncoding::Ascii);
  c2.handle_get(get("/hunter2%0A"), VirtualTime{1});
  EXPECT_EQ(to_text(*c2.exfil_log().records.at(0).decoded), "hunter2\n");
}

TEST(C2Server, RejectsNonGet) {
  auto c2 = make_server();
  auto req = get("/ZXh0cmFjdGVkX2RhdGEK");
  req.method = "POST";
  EXPECT_EQ(c2.handle_get(req, VirtualTime{0}).status, 405);
  EXPECT_TRUE(c2.exfil_log().records.empty());
}

TEST(C2Server, DistinguishesVictimsBySourcePort) {
  auto c2 = make_server();
  c2.handle_get(get("/YQ==", kPluginAgent, 50001), VirtualTime{1});
  c2.handle_get(get("/Yg==", kPluginAgent, 50002), VirtualTime{2});
  const auto log = c2.exfil_log();
  ASSERT_EQ(log.records.size(), 2u);
  EXPECT_EQ(log.records[0].source_port, 50001);
  EXPECT_EQ(log.records[1].source_port, 50002);
}

TEST(C2Server, SnapshotRestoreRoundTrip) {
  auto a = make_server();
  a.publish(parse_command("shellCmd whoami"), VirtualTime{10});
  a.publish(parse_command("upload /home/alice/passwords.txt"), VirtualTime{20});
  a.handle_get(get("/ZXh0cmFjdGVkX2RhdGEK", kPluginAgent, 1234), VirtualTime{15});
  a.handle_get(get("/broken!"), VirtualTime{25});

  auto b = make_server();
  b.restore(a.snapshot());
  EXPECT_EQ(b.snapshot(), a.snapshot());
  EXPECT_EQ(render_command_page(b.board()), render_command_page(a.board()));
  ASSERT_EQ(b.exfil_log().records.size(), 2u);
  EXPECT_EQ(b.exfil_log().records[0].decoded, a.exfil_log().records[0].decoded);
  EXPECT_FALSE(b.exfil_log().records[1].decoded);
}
