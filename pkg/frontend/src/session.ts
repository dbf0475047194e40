// Console session: one frame stream in, one command channel out.
//
// The session owns no authoritative state: every mutation goes to the
// service and only the ack (or the next frame) updates what the UI shows.
// While disconnected nothing is queued; sending fails loudly and the
// controls stay disabled.

import { Ack, Command, parseServerMessage, StateFrame } from './protocol.js';

export const STALE_BADGE_MS = 500;

export interface Transport {
  send(text: string): void;
  close(): void;
}

export type TransportFactory = (
  onMessage: (text: string) => void,
  onClose: () => void,
) => Transport;

export interface SessionEvents {
  onFrame?: (frame: StateFrame) => void;
  onConnection?: (connected: boolean) => void;
}

interface PendingAck {
  resolve: (ack: Ack) => void;
  reject: (err: Error) => void;
}

export class ConsoleSession {
  latestFrame: StateFrame | null = null;
  lastFrameAt = -Infinity; // via now()
  connected = false;

  private transport: Transport | null = null;
  private nextId = 1;
  private pending = new Map<number, PendingAck>();

  constructor(
    private makeTransport: TransportFactory,
    private events: SessionEvents = {},
    private now: () => number = () => performance.now(),
  ) {}

  connect(): void {
    if (this.transport) return;
    this.transport = this.makeTransport(
      (text) => this.handleMessage(text),
      () => this.handleClose(),
    );
    this.connected = true;
    this.events.onConnection?.(true);
  }

  disconnect(): void {
    this.transport?.close();
    this.handleClose();
  }

  /** True when no frame arrived within the staleness badge window. */
  isStale(): boolean {
    return this.now() - this.lastFrameAt > STALE_BADGE_MS;
  }

  /** Send one command; resolves with the service ack. Rejects immediately
   *  when disconnected (explicit failure, nothing is queued or retried). */
  send(command: Command): Promise<Ack> {
    if (!this.connected || !this.transport) {
      return Promise.reject(new Error('not connected'));
    }
    const id = this.nextId++;
    const promise = new Promise<Ack>((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
    });
    this.transport.send(JSON.stringify({ id, ...command }));
    return promise;
  }

  get pendingCount(): number {
    return this.pending.size;
  }

  private handleMessage(text: string): void {
    const msg = parseServerMessage(text);
    if (msg.kind === 'frame') {
      this.latestFrame = msg;
      this.lastFrameAt = this.now();
      this.events.onFrame?.(msg);
      return;
    }
    const id = typeof msg.id === 'number' ? msg.id : null;
    if (id !== null) {
      const waiter = this.pending.get(id);
      if (waiter) {
        this.pending.delete(id);
        waiter.resolve(msg);
      }
    }
  }

  private handleClose(): void {
    this.transport = null;
    if (!this.connected) return;
    this.connected = false;
    const dropped = [...this.pending.values()];
    this.pending.clear();
    for (const waiter of dropped) {
      waiter.reject(new Error('connection closed before ack'));
    }
    this.events.onConnection?.(false);
  }
}

/** Wrap one command round trip for a single control: disables the control
 *  until the ack lands, then reports the applied values (or the error). */
export async function applyWithLockout(
  session: ConsoleSession,
  command: Command,
  setDisabled: (disabled: boolean) => void,
): Promise<Ack> {
  setDisabled(true);
  try {
    const ack = await session.send(command);
    return ack;
  } finally {
    setDisabled(false);
  }
}
