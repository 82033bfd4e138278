import init, {
  link_lengths, delay_curve, compare, encode_frame, decode_frame, message_types,
} from "./pkg/qswap_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function plot(canvas, xs, series) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 60;
  ctx.clearRect(0, 0, w, h);
  const ys = series.flatMap((s) => Array.from(s.ys)).filter(Number.isFinite);
  if (ys.length === 0) return;
  const [x0, x1] = [xs[0], xs[xs.length - 1]];
  const [y0, y1] = [0, Math.max(...ys) * 1.05];
  const px = (x) => pad + ((x - x0) / (x1 - x0)) * (w - 2 * pad);
  const py = (y) => h - pad + -((y - y0) / (y1 - y0)) * (h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#333";
  ctx.font = "12px sans-serif";
  ctx.beginPath();
  ctx.moveTo(pad, pad / 2);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad / 2, h - pad);
  ctx.stroke();
  for (const x of xs) ctx.fillText(String(x), px(x) - 8, h - pad + 16);
  for (let i = 0; i <= 4; i++) {
    const y = y0 + ((y1 - y0) * i) / 4;
    ctx.fillText((y * 1e3).toFixed(2), 8, py(y) + 4);
  }
  ctx.fillText("link length (km)", w / 2 - 40, h - 16);
  ctx.fillText("ms", 8, pad / 2);

  series.forEach((s, k) => {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    xs.forEach((x, i) => {
      const y = s.ys[i];
      if (!Number.isFinite(y)) return;
      i === 0 ? ctx.moveTo(px(x), py(y)) : ctx.lineTo(px(x), py(y));
    });
    ctx.stroke();
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, w - pad - 90, pad / 2 + 16 * k);
  });
}

function drawCurve() {
  const xs = Array.from(link_lengths());
  const [d, p, pcol] = [num("c-dist"), num("c-pswap"), num("c-pcol")];
  plot($("c-plot"), xs, [
    { label: "1 qubit", color: "#c33", ys: delay_curve(d, p, 1, pcol) },
    { label: "100 qubits", color: "#36c", ys: delay_curve(d, p, 100, pcol) },
  ]);
}

function runCompare() {
  const out = $("m-out");
  try {
    const r = compare(
      num("m-s"), num("m-l"), num("m-pcol"), num("m-rq"), num("m-nq"),
      num("m-pswap"), num("m-reps"), BigInt(num("m-seed")),
    );
    const ms = (x) => (x * 1e3).toFixed(4);
    out.innerHTML = `
      <tr><th></th><th>simulated (ms)</th><th>± se</th><th>closed form (ms)</th></tr>
      <tr><th>proposed</th><td>${ms(r[0])}</td><td>${ms(r[1])}</td><td>${ms(r[4])}</td></tr>
      <tr><th>wrapper</th><td>${ms(r[2])}</td><td>${ms(r[3])}</td><td>${ms(r[5])}</td></tr>
      <tr><th>ratio</th><td>${(r[2] / r[0]).toFixed(3)}</td><td></td><td>${(r[5] / r[4]).toFixed(3)}</td></tr>`;
  } catch (e) {
    out.innerHTML = `<tr><td>${e.message ?? e}</td></tr>`;
  }
}

function show(f) {
  try {
    $("f-out").textContent = f();
  } catch (e) {
    $("f-out").textContent = `error: ${e.message ?? e}`;
  }
}

await init();
message_types().forEach((name, code) => $("f-type").add(new Option(name, code)));
$("c-run").onclick = drawCurve;
$("m-run").onclick = runCompare;
$("f-enc").onclick = () => show(() => {
  const hex = encode_frame(
    num("f-type"), num("f-seq"), 0x0000_5157_0000_0001n, num("f-level"), num("f-token"),
  );
  $("f-hex").value = hex;
  return decode_frame(hex);
});
$("f-dec").onclick = () => show(() => decode_frame($("f-hex").value));
drawCurve();
