// End-to-end against the real live service: spawn the python server, talk
// to it exactly as the browser console does.

import { ChildProcess, spawn } from 'node:child_process';
import { mkdtempSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import { WebSocket } from 'ws';

import { commands, StateFrame } from '../src/protocol.js';
import { ConsoleSession, Transport } from '../src/session.js';
import { copLayout, renderCopView } from '../src/render.js';

const PORT = 18390;
const REPO_ROOT = join(__dirname, '..', '..');
const STORE_DIR = mkdtempSync(join(tmpdir(), 'copconsole-'));
const STORE = join(STORE_DIR, 'calibration.copc');

let server: ChildProcess | null = null;

function startServer(): ChildProcess {
  return spawn(
    'python3',
    ['-m', 'copbalance.cli', 'serve', '--port', String(PORT), '--store', STORE],
    {
      cwd: REPO_ROOT,
      env: { ...process.env, COPBALANCE_BACKEND: 'numpy' },
      stdio: 'ignore',
    },
  );
}

async function waitForServer(timeoutMs = 20_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`http://127.0.0.1:${PORT}/api/state`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 100));
  }
  throw new Error('service did not come up');
}

async function stopServer(proc: ChildProcess | null): Promise<void> {
  if (!proc || proc.exitCode !== null) return;
  const exited = new Promise((resolve) => proc.once('exit', resolve));
  proc.kill('SIGTERM');
  const timeout = new Promise((r) => setTimeout(r, 4000));
  await Promise.race([exited, timeout]);
  if (proc.exitCode === null) {
    proc.kill('SIGKILL');
    await exited;
  }
}

function wsTransport(onMessage: (text: string) => void, onClose: () => void): Transport {
  const ws = new WebSocket(`ws://127.0.0.1:${PORT}/ws`);
  ws.on('message', (data) => onMessage(data.toString()));
  ws.on('close', onClose);
  ws.on('error', onClose);
  const ready = new Promise<void>((resolve) => ws.once('open', () => resolve()));
  return {
    send: (text) => {
      void ready.then(() => ws.send(text));
    },
    close: () => ws.close(),
  };
}

async function postCommand(cmd: Record<string, unknown>) {
  const res = await fetch(`http://127.0.0.1:${PORT}/api/command`, {
    method: 'POST',
    headers: { 'content-type': 'application/json' },
    body: JSON.stringify(cmd),
  });
  return res.json() as Promise<Record<string, any>>;
}

beforeAll(async () => {
  server = startServer();
  await waitForServer();
}, 30_000);

afterAll(async () => {
  await stopServer(server);
});

describe('console against the live service', () => {
  it('receives frames and renders the first one well inside 100 ms', async () => {
    const frames: Array<{ frame: StateFrame; renderedAfterMs: number }> = [];
    const session = new ConsoleSession(wsTransport, {
      onFrame: (frame) => {
        const t0 = performance.now();
        const layout = copLayout({ width: 640, height: 340, margin: 24 });
        const view = renderCopView(layout, frame, session.isStale());
        frames.push({ frame, renderedAfterMs: performance.now() - t0 });
        expect(view.feet).toHaveLength(2);
      },
    });
    session.connect();
    const deadline = Date.now() + 5000;
    while (frames.length < 3 && Date.now() < deadline) {
      await new Promise((r) => setTimeout(r, 20));
    }
    session.disconnect();
    expect(frames.length).toBeGreaterThanOrEqual(3);
    expect(frames[0].renderedAfterMs).toBeLessThan(100);
    expect(frames[0].frame.per_cell_g).toHaveLength(8);
  }, 15_000);

  it('applies a gain change by the next control tick and echoes the ack', async () => {
    const session = new ConsoleSession(wsTransport);
    session.connect();
    const ack = await session.send(commands.setGains(0.17, 0.0, 0.01));
    expect(ack.ok).toBe(true);
    expect(ack.applied).toEqual({ kp: 0.17, ki: 0.0, kd: 0.01 });
    const seen = await new Promise<StateFrame>((resolve) => {
      const check = setInterval(() => {
        const f = session.latestFrame;
        if (f && f.gains.kp === 0.17) {
          clearInterval(check);
          resolve(f);
        }
      }, 20);
    });
    session.disconnect();
    expect(seen.gains.kd).toBe(0.01);
  }, 15_000);

  it('survives a calibration save, service restart and load', async () => {
    let ack = await postCommand(commands.setCoeff('right', 2, 0.0625, 4242));
    expect(ack.ok).toBe(true);
    ack = await postCommand(commands.saveStore());
    expect(ack.ok).toBe(true);

    await stopServer(server);
    server = startServer();
    await waitForServer();

    ack = await postCommand(commands.loadStore());
    expect(ack.ok).toBe(true);
    const coeffs = ack.applied.coefficients as Array<Record<string, number>>;
    expect(coeffs).toHaveLength(8);
    expect(coeffs[6].gradient).toBe(0.0625); // right foot cell 2
    expect(coeffs[6].offset_counts).toBe(4242);
  }, 40_000);

  it('shows the fall banner for an uncontrolled lift on a tilted surface', async () => {
    await postCommand(commands.reset());
    await postCommand(commands.setControl(false));
    await postCommand(commands.setTilt(-3));
    await postCommand(commands.liftFoot('right'));

    const layout = copLayout({ width: 640, height: 340, margin: 24 });
    const deadline = Date.now() + 10_000;
    let fell = false;
    while (Date.now() < deadline && !fell) {
      await new Promise((r) => setTimeout(r, 100));
      const res = await fetch(`http://127.0.0.1:${PORT}/api/state`);
      const frame = (await res.json()) as StateFrame;
      if (frame.fallen) {
        const view = renderCopView(layout, frame, false);
        expect(view.fallBanner).toBe(true);
        fell = true;
      }
    }
    expect(fell).toBe(true);
  }, 20_000);
});
