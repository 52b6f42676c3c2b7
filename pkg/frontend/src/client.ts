/** Thin gateway client: REST calls plus an auto-reconnecting event stream.
 *
 * Both the fetch function and the WebSocket constructor are injectable so
 * tests can drive the client with fakes; the browser entry point passes
 * the real ones.
 */

import type {
  SessionInfo,
  StateView,
  StreamEvent,
  TraceResponse,
  UtteranceReply,
} from "./types.js";

export class GatewayError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface SocketLike {
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev: { code: number }) => void) | null;
  onopen: (() => void) | null;
  close(): void;
}

type SocketFactory = (url: string) => SocketLike;

export interface StreamHandle {
  close(): void;
}

export class GatewayClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
    private readonly wsFactory: SocketFactory = (url) =>
      new WebSocket(url) as unknown as SocketLike,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = (await resp.json()) as { detail?: string };
        if (body.detail) {
          detail = body.detail;
        }
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new GatewayError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  createSession(): Promise<SessionInfo> {
    return this.request<SessionInfo>("/sessions", { method: "POST" });
  }

  postUtterance(sessionId: string, text: string): Promise<UtteranceReply> {
    return this.request<UtteranceReply>(`/sessions/${sessionId}/utterances`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text }),
    });
  }

  getState(sessionId: string): Promise<StateView> {
    return this.request<StateView>(`/sessions/${sessionId}/state`);
  }

  getTrace(sessionId: string): Promise<TraceResponse> {
    return this.request<TraceResponse>(`/sessions/${sessionId}/trace`);
  }

  /** Subscribe to the session event stream.
   *
   * The gateway replays the full backlog on every connect, so the handler
   * must be idempotent; onOpen fires before any replayed event and is the
   * place to clear previously rendered state.  Unexpected closes trigger a
   * reconnect; calling close() on the handle stops that.
   */
  openStream(
    sessionId: string,
    onEvent: (event: StreamEvent) => void,
    onOpen?: () => void,
  ): StreamHandle {
    const wsUrl =
      this.baseUrl.replace(/^http/, "ws") + `/sessions/${sessionId}/events`;
    let closed = false;
    let socket: SocketLike | null = null;

    const connect = (): void => {
      if (closed) {
        return;
      }
      socket = this.wsFactory(wsUrl);
      socket.onopen = () => {
        if (onOpen) {
          onOpen();
        }
      };
      socket.onmessage = (ev) => {
        onEvent(JSON.parse(String(ev.data)) as StreamEvent);
      };
      socket.onclose = () => {
        socket = null;
        if (!closed) {
          connect();
        }
      };
    };
    connect();

    return {
      close(): void {
        closed = true;
        if (socket) {
          socket.close();
        }
      },
    };
  }
}
