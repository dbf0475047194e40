// Browser wiring: WebSocket to the live service, canvas painting, controls.

import { Ack, commands, StateFrame } from './protocol.js';
import { applyWithLockout, ConsoleSession, Transport } from './session.js';
import { copLayout, renderCopView, StripBuffer } from './render.js';

const WS_URL = `ws://${location.host || '127.0.0.1:8390'}/ws`;

const copCanvas = document.getElementById('cop') as HTMLCanvasElement;
const chartCop = document.getElementById('chart-cop') as HTMLCanvasElement;
const chartTheta = document.getElementById('chart-theta') as HTMLCanvasElement;
const statusEl = document.getElementById('status')!;
const fallEl = document.getElementById('fall-banner')!;
const staleEl = document.getElementById('stale-badge')!;
const ackLog = document.getElementById('ack-log')!;

function wsTransport(onMessage: (text: string) => void, onClose: () => void): Transport {
  const ws = new WebSocket(WS_URL);
  ws.onmessage = (ev) => onMessage(String(ev.data));
  ws.onclose = onClose;
  ws.onerror = onClose;
  return {
    send: (text) => ws.send(text),
    close: () => ws.close(),
  };
}

const copXBuf = new StripBuffer();
const setXBuf = new StripBuffer();
const thetaBuf = new StripBuffer();

const session = new ConsoleSession(wsTransport, {
  onFrame: (frame) => {
    copXBuf.push(frame.t_ms, frame.cop_x);
    if (frame.setpoint) setXBuf.push(frame.t_ms, frame.setpoint.x);
    thetaBuf.push(frame.t_ms, frame.theta_e);
    paint(frame);
    reflectFrame(frame);
  },
  onConnection: (ok) => {
    statusEl.textContent = ok ? 'connected' : 'disconnected';
    statusEl.className = ok ? 'ok' : 'bad';
    document
      .querySelectorAll<HTMLButtonElement | HTMLInputElement>('button, input')
      .forEach((el) => (el.disabled = !ok));
  },
});

function paint(frame: StateFrame): void {
  const ctx = copCanvas.getContext('2d')!;
  const layout = copLayout({
    width: copCanvas.width,
    height: copCanvas.height,
    margin: 24,
  });
  const view = renderCopView(layout, frame, session.isStale());

  ctx.clearRect(0, 0, copCanvas.width, copCanvas.height);
  ctx.strokeStyle = '#5b8db8';
  ctx.lineWidth = 2;
  for (const foot of view.feet) {
    ctx.strokeRect(foot.x, foot.y, foot.width, foot.height);
  }
  ctx.fillStyle = '#9aa7b0';
  ctx.font = '11px monospace';
  for (const cell of view.cells) {
    ctx.fillText(cell.grams.toFixed(0), cell.x - 10, cell.y);
  }
  if (view.setpoint) {
    ctx.strokeStyle = '#3fa34d';
    ctx.beginPath();
    ctx.arc(view.setpoint[0], view.setpoint[1], 7, 0, 2 * Math.PI);
    ctx.stroke();
  }
  if (view.dot) {
    ctx.fillStyle = view.fallBanner ? '#d64545' : '#e8a33d';
    ctx.beginPath();
    ctx.arc(view.dot[0], view.dot[1], 6, 0, 2 * Math.PI);
    ctx.fill();
  }
  fallEl.hidden = !view.fallBanner;
  staleEl.hidden = !view.staleBadge;

  drawStrip(chartCop, copXBuf, setXBuf, -2.1, 2.1);
  drawStrip(chartTheta, thetaBuf, null, -8, 8);
}

function drawStrip(
  canvas: HTMLCanvasElement,
  main: StripBuffer,
  overlay: StripBuffer | null,
  lo: number,
  hi: number,
): void {
  const ctx = canvas.getContext('2d')!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = '#2c3e50';
  ctx.strokeRect(0, 0, canvas.width, canvas.height);
  const draw = (buf: StripBuffer, color: string) => {
    const pts = buf.polyline(canvas.width, canvas.height, lo, hi);
    if (pts.length < 2) return;
    ctx.strokeStyle = color;
    ctx.beginPath();
    ctx.moveTo(pts[0][0], pts[0][1]);
    for (const [x, y] of pts.slice(1)) ctx.lineTo(x, y);
    ctx.stroke();
  };
  draw(main, '#e8a33d');
  if (overlay) draw(overlay, '#3fa34d');
}

// -- controls -----------------------------------------------------------------

function num(id: string): number {
  return Number((document.getElementById(id) as HTMLInputElement).value);
}

function logAck(ack: Ack): void {
  const line = document.createElement('div');
  line.textContent = ack.ok
    ? `ok ${ack.type}: ${JSON.stringify(ack.applied)}`
    : `error: ${ack.error?.message}`;
  line.className = ack.ok ? 'ok' : 'bad';
  ackLog.prepend(line);
  while (ackLog.childElementCount > 8) ackLog.lastChild?.remove();
}

function wireButton(id: string, build: () => ReturnType<typeof commands.reset>): void {
  const el = document.getElementById(id) as HTMLButtonElement;
  el.onclick = () => {
    applyWithLockout(session, build(), (d) => (el.disabled = d))
      .then(logAck)
      .catch((err) => {
        const line = document.createElement('div');
        line.textContent = `send failed: ${err.message}`;
        line.className = 'bad';
        ackLog.prepend(line);
      });
  };
}

function reflectFrame(frame: StateFrame): void {
  (document.getElementById('live-gains')!).textContent =
    `kp=${frame.gains.kp} ki=${frame.gains.ki} kd=${frame.gains.kd} ` +
    `| tilt=${frame.tilt_deg.toFixed(1)} deg | support=${frame.support} ` +
    `| control ${frame.control_enabled ? 'on' : 'off'}`;
}

wireButton('apply-gains', () => commands.setGains(num('kp'), num('ki'), num('kd')));
wireButton('apply-setpoint', () => commands.setSetpoint(num('set-x'), num('set-y')));
wireButton('apply-tilt', () => commands.setTilt(num('tilt')));
wireButton('control-on', () => commands.setControl(true));
wireButton('control-off', () => commands.setControl(false));
wireButton('lift-left', () => commands.liftFoot('left'));
wireButton('lift-right', () => commands.liftFoot('right'));
wireButton('lower', () => commands.lowerFoot());
wireButton('tare', () =>
  commands.tare(
    (document.getElementById('cal-foot') as HTMLSelectElement).value as 'left' | 'right',
    num('cal-cell'),
  ),
);
wireButton('apply-coeff', () =>
  commands.setCoeff(
    (document.getElementById('cal-foot') as HTMLSelectElement).value as 'left' | 'right',
    num('cal-cell'),
    num('cal-gradient'),
    num('cal-offset'),
  ),
);
wireButton('save-store', () => commands.saveStore());
wireButton('load-store', () => commands.loadStore());
wireButton('trial-left', () => commands.startTrial('left'));
wireButton('trial-right', () => commands.startTrial('right'));
wireButton('trial-stop', () => commands.stopTrial());
wireButton('reset', () => commands.reset());

// staleness badge must appear even when frames stop arriving entirely
setInterval(() => {
  staleEl.hidden = !session.isStale();
}, 100);

session.connect();
