/**
 * Client for the maze environment protocol.
 *
 * One request in flight at a time, one response per request, no retries and
 * no hidden state: reset() and step() each resolve with the decoded
 * observation, ERR frames reject with a ProtocolError carrying the server's
 * code, transport drops reject with a TransportError.
 */
import net from "node:net";

import {
  ClientObservation,
  ERR,
  FrameParser,
  OBS,
  ProtocolError,
  TransportError,
  decodeErr,
  decodeObs,
  encodeReset,
  encodeStep,
} from "./wire.js";

export { ClientObservation, ProtocolError, TransportError } from "./wire.js";

export interface ClientOptions {
  /** Server sends raw per-pixel depth instead of the 4x16 grid. */
  rawDepth?: boolean;
  connectTimeoutMs?: number;
}

export class NavWorldClient {
  private parser = new FrameParser();
  private waiter: { resolve: (o: ClientObservation) => void; reject: (e: Error) => void } | null = null;
  private closed = false;

  private constructor(private readonly sock: net.Socket, private readonly rawDepth: boolean) {
    sock.on("data", (data: Buffer) => this.onData(data));
    sock.on("error", (err) => this.fail(new TransportError(err.message)));
    sock.on("close", () => {
      if (!this.closed) this.fail(new TransportError("connection closed by server"));
    });
  }

  static connect(host: string, port: number, options: ClientOptions = {}): Promise<NavWorldClient> {
    return new Promise((resolve, reject) => {
      const sock = net.createConnection({ host, port });
      const timer = setTimeout(() => {
        sock.destroy();
        reject(new TransportError(`connect timeout to ${host}:${port}`));
      }, options.connectTimeoutMs ?? 5000);
      sock.once("connect", () => {
        clearTimeout(timer);
        sock.setNoDelay(true);
        resolve(new NavWorldClient(sock, options.rawDepth ?? false));
      });
      sock.once("error", (err) => {
        clearTimeout(timer);
        reject(new TransportError(err.message));
      });
    });
  }

  reset(episodeSeed: bigint | number): Promise<ClientObservation> {
    return this.roundTrip(encodeReset(episodeSeed));
  }

  step(action: number): Promise<ClientObservation> {
    return this.roundTrip(encodeStep(action));
  }

  close(): void {
    this.closed = true;
    this.sock.destroy();
  }

  private roundTrip(frame: Buffer): Promise<ClientObservation> {
    if (this.closed) return Promise.reject(new TransportError("client is closed"));
    if (this.waiter) return Promise.reject(new TransportError("a request is already in flight"));
    return new Promise((resolve, reject) => {
      this.waiter = { resolve, reject };
      this.sock.write(frame);
    });
  }

  private onData(data: Buffer): void {
    let frames;
    try {
      frames = this.parser.push(data);
    } catch (err) {
      this.fail(err instanceof Error ? err : new TransportError(String(err)));
      return;
    }
    for (const { ftype, payload } of frames) {
      const waiter = this.waiter;
      this.waiter = null;
      if (!waiter) continue; // unsolicited frame; nothing sensible to do with it
      if (ftype === OBS) {
        try {
          waiter.resolve(decodeObs(payload, this.rawDepth));
        } catch (err) {
          waiter.reject(err instanceof Error ? err : new TransportError(String(err)));
        }
      } else if (ftype === ERR) {
        const { code, message } = decodeErr(payload);
        waiter.reject(new ProtocolError(message, code));
      } else {
        waiter.reject(new ProtocolError(`unexpected frame type ${ftype}`, 0));
      }
    }
  }

  private fail(err: Error): void {
    const waiter = this.waiter;
    this.waiter = null;
    if (waiter) waiter.reject(err);
  }
}
