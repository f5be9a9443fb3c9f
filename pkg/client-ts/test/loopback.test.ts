/**
 * End-to-end loopback: a live server is spawned through the CLI and a
 * 500-step client rollout must be bit-identical to the in-process
 * environment (per-step sha256 of every OBS payload, recorded in the golden
 * contract).
 */
import { spawn, ChildProcess } from "node:child_process";
import { createHash } from "node:crypto";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, beforeAll, describe, expect, test } from "vitest";

import { NavWorldClient, ProtocolError } from "../src/client.js";

const here = dirname(fileURLToPath(import.meta.url));
const golden = JSON.parse(readFileSync(join(here, "..", "golden", "expected.json"), "utf-8"));

let proc: ChildProcess;
let port: number;

function serverConfig(): string {
  const dir = mkdtempSync(join(tmpdir(), "navworld-"));
  const cfg = join(dir, "server.toml");
  writeFileSync(
    cfg,
    [
      "[env]",
      `kind = "${golden.config.kind}"`,
      `layout_seed = ${golden.config.layout_seed}`,
      `img_h = ${golden.config.img}`,
      `img_w = ${golden.config.img}`,
      "",
      "[server]",
      "port = 0",
      "",
    ].join("\n"),
  );
  return cfg;
}

beforeAll(async () => {
  proc = spawn("python3", ["-m", "navworld.runner.cli", "serve-env", "--config", serverConfig()], {
    stdio: ["ignore", "pipe", "inherit"],
  });
  port = await new Promise<number>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("server did not announce its port")), 30_000);
    let buf = "";
    proc.stdout!.on("data", (chunk) => {
      buf += chunk.toString();
      const m = buf.match(/on 127\.0\.0\.1:(\d+)/);
      if (m) {
        clearTimeout(timer);
        resolve(parseInt(m[1], 10));
      }
    });
    proc.once("exit", (code) => reject(new Error(`server exited early with ${code}`)));
  });
}, 40_000);

afterAll(() => {
  proc?.kill();
});

function sha256(data: Uint8Array): string {
  return createHash("sha256").update(data).digest("hex");
}

describe("protocol loopback", () => {
  test(
    "500-step rollout is bit-identical to the in-process environment",
    async () => {
      const client = await NavWorldClient.connect("127.0.0.1", port);
      const { actions, payload_sha256, rewards_f32, dones } = golden.rollout;
      let obs = await client.reset(golden.config.episode_seed);
      expect(sha256(obs.raw)).toBe(payload_sha256[0]);
      for (let i = 0; i < actions.length; i++) {
        obs = obs.done ? await client.reset(golden.config.episode_seed) : await client.step(actions[i]);
        expect(sha256(obs.raw)).toBe(payload_sha256[i + 1]);
        expect(obs.reward).toBe(rewards_f32[i + 1]);
        expect(obs.done).toBe(dones[i + 1]);
      }
      client.close();
    },
    120_000,
  );

  test("fresh sessions with the same seed give identical first frames", async () => {
    const a = await NavWorldClient.connect("127.0.0.1", port);
    const b = await NavWorldClient.connect("127.0.0.1", port);
    const oa = await a.reset(7);
    const ob = await b.reset(7);
    expect(Buffer.from(oa.raw).equals(Buffer.from(ob.raw))).toBe(true);
    a.close();
    b.close();
  });

  test("bad action id surfaces protocol error 101", async () => {
    const client = await NavWorldClient.connect("127.0.0.1", port);
    await client.reset(1);
    await expect(client.step(9)).rejects.toMatchObject({ name: "ProtocolError", code: 101 });
    client.close();
  });

  test("step before reset surfaces protocol error 100", async () => {
    const client = await NavWorldClient.connect("127.0.0.1", port);
    await expect(client.step(0)).rejects.toMatchObject({ name: "ProtocolError", code: 100 });
    client.close();
  });
});
